"""Invariant checks run by ``lgfpf validate`` on a scenario configuration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import EVALUATORS
from .config import ScenarioConfig, build_model, sample_prior
from .filter import FilterModel, GainConfig, ParticleEnsemble, Representation, run_filter
from .galerkin import assemble, solve_gain, span_residual
from .lie import (
    TWO_PI,
    group_exp,
    orthonormality_error,
    quat_exp_batch,
    quat_multiply,
    quat_to_rotation_batch,
)
from .rng import NoiseStream
from .simulate import generate_truth, initial_ensemble, phase_error

FD_STEP = 1e-4


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _moved(cfg: ScenarioConfig, states: np.ndarray, n: int, t: float) -> np.ndarray:
    """States moved by ``exp(t E_n)`` on the right."""
    if cfg.rep is Representation.PHASE:
        return states + t
    v = np.zeros((states.shape[0], 3))
    v[:, n] = t
    if cfg.rep is Representation.QUATERNION:
        return quat_multiply(states, quat_exp_batch(v))
    e = group_exp(cfg.tag, v[0]).matrix
    return states @ e


def derivative_error(cfg: ScenarioConfig, states: np.ndarray) -> float:
    """Largest gap between the closed-form derivative table and central differences."""
    ev = EVALUATORS[cfg.basis_id]
    _, d = ev(states)
    worst = 0.0
    for n in range(cfg.tag.dim):
        fd = (ev(_moved(cfg, states, n, FD_STEP))[0] - ev(_moved(cfg, states, n, -FD_STEP))[0]) / (2 * FD_STEP)
        worst = max(worst, float(np.abs(fd - d[:, n, :]).max()))
    return worst


def _integrity(rep: Representation, states: np.ndarray) -> float:
    if rep is Representation.PHASE:
        return 0.0 if np.all((states >= 0.0) & (states < TWO_PI)) else np.inf
    if rep is Representation.QUATERNION:
        return float(np.abs(np.linalg.norm(states, axis=1) - 1.0).max())
    return orthonormality_error(states)


def run_checks(cfg: ScenarioConfig, threads: int = 2, steps: int = 200) -> list[Check]:
    checks = []
    model = build_model(cfg)
    short = cfg.replace(t_final=min(cfg.t_final, steps * cfg.dt), n_particles=min(cfg.n_particles, 2000))
    ens = initial_ensemble(short)

    x = sample_prior(cfg, NoiseStream(cfg.seed, "validate").generator(0), 200)
    if cfg.rep is Representation.MATRIX:
        x = quat_to_rotation_batch(x)
    err = derivative_error(cfg, x)
    checks.append(Check("derivative table", err < 1e-6, f"max |closed form - finite difference| = {err:.2e}"))

    h = model.observe(ens.group_states())
    system = assemble(cfg.basis_id, ens.states, h)
    gain = solve_gain(system, cfg.ridge)
    res = float(np.abs(system.A @ gain.kappa - system.b).max())
    ok = res < 1e-10 or gain.regularization_used > 0
    checks.append(
        Check(
            "galerkin solve",
            ok,
            f"|A kappa - b| = {res:.2e}, cond = {system.condition_estimate:.2e}, ridge = {gain.regularization_used:.2e}",
        )
    )
    rel = span_residual(cfg.basis_id, ens.states, h)
    checks.append(Check("observation span", True, f"relative residual of h outside the basis span = {rel:.3f}"))

    traj = generate_truth(short)
    obs = traj.observations()
    final = {}

    def keep(tag):
        def cb(rec, e):
            final[tag] = e

        return cb

    serial = run_filter(model, ens, obs, GainConfig(basis=cfg.basis_id, ridge=cfg.ridge), keep(1))
    parallel = run_filter(
        model, ens, obs, GainConfig(basis=cfg.basis_id, ridge=cfg.ridge, threads=max(2, threads)), keep(2)
    )
    defect = _integrity(cfg.rep, final[1].states)
    checks.append(Check("group integrity", defect < 1e-9, f"defect after {len(obs)} steps = {defect:.2e}"))
    same = np.array_equal(final[1].states, final[2].states) and all(
        a.kappa == b.kappa and a.summary == b.summary for a, b in zip(serial, parallel)
    )
    checks.append(Check("thread determinism", same, f"1 vs {max(2, threads)} threads bit-identical: {same}"))

    c = 0.75
    shifted = FilterModel(model.tag, model.drift, model.diffusion, lambda s: model.observation(s) + c)
    obs_c = [(t, dz + c * cfg.dt) for t, dz in obs[:20]]
    run_filter(model, ens, obs[:20], GainConfig(basis=cfg.basis_id, ridge=cfg.ridge), keep(3))
    run_filter(shifted, ens, obs_c, GainConfig(basis=cfg.basis_id, ridge=cfg.ridge), keep(4))
    a, b = final[3].states, final[4].states
    gap = float(np.max(phase_error(a, b) if cfg.rep is Representation.PHASE else np.abs(a - b)))
    checks.append(Check("constant-shift invariance", gap < 1e-9, f"max state gap after 20 steps = {gap:.2e}"))
    return checks
