"""Truth generation, scenario runs and error metrics."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, build_model, config_hash, sample_prior
from .filter import GainConfig, ParticleEnsemble, Representation, propagate, run_filter
from .io import CODE_VERSION, Trajectory, write_csv, write_json
from .lie import (
    TWO_PI,
    GroupElement,
    GroupTag,
    UnitQuaternion,
    geodesic_angle_quat,
    phase_from_so2,
    quat_to_rotation_batch,
    rotation_to_quat_batch,
    wrap_phase,
)
from .oracles import GridDensity, WeightedEnsemble, grid_moments, ks_grid_step, sir_step
from .rng import NoiseStream

PHASE_MOMENTS = {
    "sin": np.sin,
    "cos": np.cos,
    "sin2": lambda th: np.sin(2.0 * th),
    "cos2": lambda th: np.cos(2.0 * th),
}


class HashMismatchError(ValueError):
    """Trajectory produced by a different configuration."""


# -- metrics -----------------------------------------------------------------


def phase_error(a, b):
    """Wrapped phase difference in ``[0, pi]``."""
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), TWO_PI))
    return np.minimum(d, TWO_PI - d)


def error_metric(estimate, truth) -> float:
    """Distance in radians between two group elements of the same group.

    Accepts :class:`GroupElement` or :class:`UnitQuaternion` arguments.
    """

    def tag_of(x):
        if isinstance(x, UnitQuaternion):
            return GroupTag.SO3
        if isinstance(x, GroupElement):
            return x.tag
        raise ValueError(f"not a group element: {x!r}")

    ta, tb = tag_of(estimate), tag_of(truth)
    if ta is not tb:
        raise ValueError(f"cannot compare {ta.value} with {tb.value}")
    if ta is GroupTag.SO2:
        return float(phase_error(phase_from_so2(estimate), phase_from_so2(truth)))

    def quat(x):
        return x.as_array() if isinstance(x, UnitQuaternion) else rotation_to_quat_batch(x.matrix)

    return float(geodesic_angle_quat(quat(estimate), quat(truth)))


# -- truth -------------------------------------------------------------------


def generate_truth(cfg: ScenarioConfig) -> Trajectory:
    """Simulate the signal with the filter's geometric scheme and emit ``dZ``.

    The truth is carried as a phase (SO(2)) or a Hamilton quaternion (SO(3)).
    ``dZ`` over a step uses the state at the start of the step.
    """
    model = build_model(cfg)
    rep = Representation.PHASE if cfg.group == "SO2" else Representation.QUATERNION
    x = sample_prior(cfg, NoiseStream(cfg.seed, "truth-init").generator(0), 1)
    x0 = x[0].copy()
    motion, obs = NoiseStream(cfg.seed, "truth"), NoiseStream(cfg.seed, "obs")
    n, dt = cfg.n_steps, cfg.dt
    sqdt = math.sqrt(dt)
    states = np.empty((n,) + x.shape[1:])
    dz = np.empty(n)
    for k in range(n):
        group = quat_to_rotation_batch(x) if rep is Representation.QUATERNION else x
        h = float(model.observe(group)[0])
        dz[k] = h * dt + sqdt * obs.normal(k, 1)[0]
        x = propagate(x, rep, model, motion, k, dt)
        states[k] = x[0]
    t = dt * np.arange(1, n + 1)
    return Trajectory(config_hash(cfg), cfg.seed, cfg.group, x0, t, states, dz)


# -- scenario runs -----------------------------------------------------------


@dataclass
class FilterOutput:
    columns: list
    rows: list
    metrics: dict
    estimates: np.ndarray
    moments: dict | None
    runtime: float


def _truth_errors(group, estimates, truth_states):
    if group == "SO2":
        return phase_error(estimates, truth_states)
    return geodesic_angle_quat(estimates, truth_states)


def _phase_moments(theta, weights=None):
    """Means of the functions in :data:`PHASE_MOMENTS` (sin and cos evaluated once)."""
    s, c = np.sin(theta), np.cos(theta)
    f = np.stack([s, c, 2.0 * s * c, (c - s) * (c + s)])
    m = f.mean(axis=1) if weights is None else f @ weights
    return [float(v) for v in m]


def initial_ensemble(cfg: ScenarioConfig, n: int | None = None, domain: str = "fpf") -> ParticleEnsemble:
    n = cfg.n_particles if n is None else n
    x = sample_prior(cfg, NoiseStream(cfg.seed, f"{domain}-init").generator(0), n)
    if cfg.rep is Representation.MATRIX:
        x = quat_to_rotation_batch(x)
    return ParticleEnsemble(cfg.rep, x, NoiseStream(cfg.seed, domain))


def run_fpf(cfg: ScenarioConfig, traj: Trajectory, threads: int = 1) -> FilterOutput:
    model = build_model(cfg)
    ens = initial_ensemble(cfg)
    gcfg = GainConfig(
        basis=cfg.basis_id, ridge=cfg.ridge, threads=threads, reorthonormalize_every=cfg.reorthonormalize_every
    )
    moments = []

    def grab(rec, e):
        if cfg.group == "SO2":
            moments.append(_phase_moments(e.states))

    start = time.perf_counter()
    records = run_filter(model, ens, traj.observations(), gcfg, callback=grab)
    runtime = time.perf_counter() - start

    L = cfg.basis_id.size
    if cfg.group == "SO2":
        skeys = ["mean_phase", "resultant_length"]
        est = np.array([r.summary["mean_phase"] for r in records])
    else:
        skeys = ["q0", "q1", "q2", "q3", "spread"]
        est = np.array([[r.summary[k] for k in ("q0", "q1", "q2", "q3")] for r in records])
    columns = ["t", "dz", "h_hat", *[f"kappa_{l + 1}" for l in range(L)], "regularization_used", *skeys]
    rows = [[r.t, r.dz, r.h_hat, *r.kappa, r.regularization_used, *(r.summary[k] for k in skeys)] for r in records]
    if cfg.group == "SO2":
        columns += [f"m_{k}" for k in PHASE_MOMENTS]
        rows = [row + m for row, m in zip(rows, moments)]
    if cfg.rep is Representation.QUATERNION:
        columns.append("norm_defect")
        rows = [row + [r.norm_defect] for row, r in zip(rows, records)]
    err = _truth_errors(cfg.group, est, traj.states)
    columns.append("error")
    rows = [row + [e] for row, e in zip(rows, err)]
    metrics = {
        "mean_error": float(np.mean(err)),
        "final_error": float(err[-1]),
        "max_regularization": float(max(r.regularization_used for r in records)),
    }
    mom = np.array(moments) if moments else None
    return FilterOutput(columns, rows, metrics, est, mom, runtime)


def run_grid(cfg: ScenarioConfig, traj: Trajectory) -> FilterOutput:
    model = build_model(cfg)
    p = cfg.prior
    m = cfg.grid_size
    if p["kind"] == "uniform":
        dens = GridDensity.uniform(m)
    elif p["kind"] == "von_mises":
        dens = GridDensity.von_mises(float(p["mean"]), float(p["concentration"]), m)
    else:
        dens = GridDensity.point(float(p["mean"]), m)
    start = time.perf_counter()
    rows, moms, est = [], [], []
    for t, dz in zip(traj.t, traj.dz):
        dens = ks_grid_step(dens, model, float(dz), cfg.dt)
        mo = [grid_moments(dens, f) for f in PHASE_MOMENTS.values()]
        phase = float(wrap_phase(math.atan2(mo[0], mo[1])))
        moms.append(mo)
        est.append(phase)
        rows.append([t, phase, math.hypot(mo[0], mo[1]), *mo])
    runtime = time.perf_counter() - start
    est = np.array(est)
    err = phase_error(est, traj.states)
    rows = [row + [e] for row, e in zip(rows, err)]
    columns = ["t", "mean_phase", "resultant_length", *[f"m_{k}" for k in PHASE_MOMENTS], "error"]
    metrics = {"mean_error": float(np.mean(err)), "final_error": float(err[-1])}
    return FilterOutput(columns, rows, metrics, est, np.array(moms), runtime)


def run_sir(cfg: ScenarioConfig, traj: Trajectory) -> FilterOutput:
    model = build_model(cfg)
    rep = Representation.PHASE if cfg.group == "SO2" else Representation.QUATERNION
    x = sample_prior(cfg, NoiseStream(cfg.seed, "sir-init").generator(0), cfg.sir_particles)
    ens = WeightedEnsemble.uniform(rep, x, NoiseStream(cfg.seed, "sir"), NoiseStream(cfg.seed, "sir-resample"))
    start = time.perf_counter()
    rows, moms, est = [], [], []
    for t, dz in zip(traj.t, traj.dz):
        ens = sir_step(ens, model, float(dz), cfg.dt)
        if rep is Representation.PHASE:
            mo = _phase_moments(ens.states, ens.weights)
            phase = float(wrap_phase(math.atan2(mo[0], mo[1])))
            moms.append(mo)
            est.append(phase)
            rows.append([t, ens.ess, float(ens.resampled), phase, math.hypot(mo[0], mo[1]), *mo])
        else:
            s = ens.summary()
            q = [s[k] for k in ("q0", "q1", "q2", "q3")]
            est.append(q)
            rows.append([t, ens.ess, float(ens.resampled), *q, s["spread"]])
    runtime = time.perf_counter() - start
    est = np.array(est)
    err = _truth_errors(cfg.group, est, traj.states)
    rows = [row + [e] for row, e in zip(rows, err)]
    if rep is Representation.PHASE:
        columns = ["t", "ess", "resampled", "mean_phase", "resultant_length", *[f"m_{k}" for k in PHASE_MOMENTS]]
    else:
        columns = ["t", "ess", "resampled", "q0", "q1", "q2", "q3", "spread"]
    columns.append("error")
    metrics = {"mean_error": float(np.mean(err)), "final_error": float(err[-1])}
    return FilterOutput(columns, rows, metrics, est, np.array(moms) if moms else None, runtime)


def compare_outputs(group: str, a: FilterOutput, b: FilterOutput) -> dict:
    """Time-averaged discrepancies between two filters on the same path."""
    out = {}
    if group == "SO2":
        out["mean_phase"] = float(np.mean(phase_error(a.estimates, b.estimates)))
        if a.moments is not None and b.moments is not None:
            diff = np.mean(np.abs(a.moments - b.moments), axis=0)
            out.update({f"moment_{k}": float(v) for k, v in zip(PHASE_MOMENTS, diff)})
    else:
        out["geodesic_mean"] = float(np.mean(geodesic_angle_quat(a.estimates, b.estimates)))
    return out


def run_scenario(cfg: ScenarioConfig, traj: Trajectory, out_dir: str | Path | None = None, threads: int = 1) -> dict:
    """Run the FPF and the enabled oracles on ``traj``; optionally write result files.

    Files written to ``out_dir``: ``fpf.csv``, ``grid.csv``/``sir.csv`` when
    enabled, ``summary.json`` and ``timing.json``.  Wall-clock times go only
    to ``timing.json`` so the other files are reproducible byte for byte.
    """
    h = config_hash(cfg)
    if traj.config_hash != h:
        raise HashMismatchError(
            f"trajectory was generated for config {traj.config_hash[:12]}, not {h[:12]}; regenerate it"
        )
    if traj.t.size != cfg.n_steps:
        raise ValueError(f"trajectory has {traj.t.size} rows, config expects {cfg.n_steps}")
    outputs = {"fpf": run_fpf(cfg, traj, threads)}
    if cfg.grid_oracle and cfg.group == "SO2":
        outputs["grid"] = run_grid(cfg, traj)
    if cfg.sir_oracle:
        outputs["sir"] = run_sir(cfg, traj)

    comparisons = {}
    for ref in ("grid", "sir"):
        if ref in outputs:
            comparisons[f"fpf_vs_{ref}"] = compare_outputs(cfg.group, outputs["fpf"], outputs[ref])
    summary = {
        "config": cfg.to_dict(),
        "config_hash": h,
        "code_version": CODE_VERSION,
        "filters": {k: v.metrics for k, v in outputs.items()},
        "comparisons": comparisons,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = {"config_hash": h, "seed": cfg.seed, "group": cfg.group}
        for name, o in outputs.items():
            write_csv(out / f"{name}.csv", dict(header, kind=name), o.columns, o.rows)
        write_json(out / "summary.json", summary)
        timing = {"config_hash": h, "code_version": CODE_VERSION, "threads": threads}
        timing.update({f"{k}_seconds": v.runtime for k, v in outputs.items()})
        write_json(out / "timing.json", timing)
    return summary
