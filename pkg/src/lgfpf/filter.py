"""Feedback particle filter on SO(2) and SO(3).

Each particle follows

    dX = X V0(X) dt + X V1 o dB + X K(X) o (dZ - (h(X) + h_hat)/2 dt)

with the gain ``K`` from the Galerkin solve.  One step:

1. evaluate ``h`` on all particles and assemble/solve the Galerkin system
   (``kappa`` is then frozen for the rest of the step);
2. form the innovation ``dI_i = dZ - (h_i + h_hat) dt / 2``;
3. Heun predictor/corrector on the state dependence of the gain, with the
   increment applied through the exact group exponential.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels as default_kernels
from .basis import BasisId
from .galerkin import GainCoefficients, assemble, solve_gain, span_residual
from .lie import (
    GroupTag,
    reorthonormalize,
    wrap_phase,
)
from .rng import NoiseStream


class Representation(enum.Enum):
    PHASE = "phase"
    MATRIX = "matrix"
    QUATERNION = "quaternion"

    @property
    def tag(self) -> GroupTag:
        return GroupTag.SO2 if self is Representation.PHASE else GroupTag.SO3

    @property
    def default_basis(self) -> BasisId:
        return {
            Representation.PHASE: BasisId.FOURIER1_SO2,
            Representation.MATRIX: BasisId.MATRIX_SO3,
            Representation.QUATERNION: BasisId.QUATERNION_SO3,
        }[self]


@dataclass(frozen=True)
class FilterModel:
    """Signal and observation model.

    ``drift`` and ``observation`` act on batches: phases ``(N,)`` for SO(2),
    rotation matrices ``(N, 3, 3)`` for SO(3).  ``drift`` may also be given
    as constant algebra coordinates.  The observation noise has unit
    variance.
    """

    tag: GroupTag
    drift: Callable[[np.ndarray], np.ndarray] | Sequence[float] | float
    diffusion: Sequence[float] | float
    observation: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        v1 = np.atleast_1d(np.asarray(self.diffusion, dtype=float))
        if v1.shape != (self.tag.dim,):
            raise ValueError(f"diffusion needs {self.tag.dim} coordinates for {self.tag.value}")
        object.__setattr__(self, "diffusion", v1)
        if not callable(self.drift):
            w = np.atleast_1d(np.asarray(self.drift, dtype=float))
            if w.shape != (self.tag.dim,):
                raise ValueError(f"drift needs {self.tag.dim} coordinates for {self.tag.value}")
            object.__setattr__(self, "drift", w)

    def drift_at(self, group_states: np.ndarray) -> np.ndarray:
        n = group_states.shape[0]
        if callable(self.drift):
            w = np.asarray(self.drift(group_states), dtype=float)
        else:
            w = self.drift
        if self.tag is GroupTag.SO2:
            return np.broadcast_to(w.reshape(-1) if w.ndim else w, (n,)).astype(float)
        return np.broadcast_to(w, (n, 3)).astype(float)

    def observe(self, group_states: np.ndarray) -> np.ndarray:
        h = np.asarray(self.observation(group_states), dtype=float)
        return np.broadcast_to(h, (group_states.shape[0],)).astype(float)


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle states in one representation plus their noise stream.

    ``step`` counts completed steps and addresses the noise stream; ``t`` is
    the current time.
    """

    representation: Representation
    states: np.ndarray
    noise: NoiseStream
    step: int = 0
    t: float = 0.0

    def __post_init__(self):
        s = np.ascontiguousarray(self.states, dtype=float)
        expected = {
            Representation.PHASE: (),
            Representation.MATRIX: (3, 3),
            Representation.QUATERNION: (4,),
        }[self.representation]
        if s.shape[1:] != expected:
            raise ValueError(f"{self.representation.value} states need trailing shape {expected}, got {s.shape}")
        if s.shape[0] < 2:
            raise ValueError("an ensemble needs at least two particles")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    @property
    def tag(self) -> GroupTag:
        return self.representation.tag

    @property
    def n(self) -> int:
        return self.states.shape[0]

    def group_states(self) -> np.ndarray:
        """Phases for SO(2), rotation matrices for SO(3)."""
        if self.representation is Representation.QUATERNION:
            return default_kernels.quat_to_rotation(self.states)
        return self.states


@dataclass(frozen=True)
class GainConfig:
    basis: BasisId | None = None
    ridge: float = 0.0
    threads: int = 1
    reorthonormalize_every: int = 100
    diagnostics: bool = False
    backend: object = None

    def basis_for(self, rep: Representation) -> BasisId:
        b = self.basis or rep.default_basis
        if b.representation != rep.value:
            raise ValueError(f"basis {b.value} does not match {rep.value} particles")
        return b


@dataclass(frozen=True)
class StepRecord:
    t: float
    h_hat: float
    kappa: tuple
    regularization_used: float
    summary: Mapping[str, float]
    dz: float
    norm_defect: float = 0.0
    diagnostics: Mapping[str, float] = field(default_factory=dict)


def control_term(h_i, h_hat: float, dz: float, dt: float):
    """Innovation increment ``dZ - (h_i + h_hat) dt / 2`` multiplying the gain."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return dz - 0.5 * (np.asarray(h_i, dtype=float) + h_hat) * dt


# -- posterior summaries -----------------------------------------------------


def phase_summary(theta: np.ndarray, weights=None) -> dict:
    if weights is None:
        s = float(np.mean(np.sin(theta)))
        c = float(np.mean(np.cos(theta)))
    else:
        s = float(np.dot(weights, np.sin(theta)))
        c = float(np.dot(weights, np.cos(theta)))
    return {
        "mean_phase": float(wrap_phase(math.atan2(s, c))),
        "resultant_length": math.hypot(s, c),
        "mean_sin": s,
        "mean_cos": c,
    }


def _outer_from_mean_rotation(m: np.ndarray) -> np.ndarray:
    """``E[q q^T]`` expressed through ``E[R]`` (each entry of ``q q^T`` is linear in R)."""
    r11, r12, r13 = m[0]
    r21, r22, r23 = m[1]
    r31, r32, r33 = m[2]
    return 0.25 * np.array(
        [
            [1 + r11 + r22 + r33, r32 - r23, r13 - r31, r21 - r12],
            [r32 - r23, 1 + r11 - r22 - r33, r12 + r21, r13 + r31],
            [r13 - r31, r12 + r21, 1 - r11 + r22 - r33, r23 + r32],
            [r21 - r12, r13 + r31, r23 + r32, 1 - r11 - r22 + r33],
        ]
    )


def quaternion_mean(outer: np.ndarray) -> tuple[np.ndarray, float]:
    """Principal eigenvector of the second-moment matrix, sign fixed by ``q0 >= 0``.

    Returns the mean and the spread ``1 - lambda_max`` (0 for a point mass).
    """
    w, v = np.linalg.eigh(outer)
    q = v[:, -1]
    if q[0] < 0 or (q[0] == 0 and q[np.argmax(np.abs(q))] < 0):
        q = -q
    return q / np.linalg.norm(q), float(max(0.0, 1.0 - w[-1]))


def so3_summary(states: np.ndarray, representation: Representation, weights=None) -> dict:
    if representation is Representation.QUATERNION:
        if weights is None:
            outer = states.T @ states / states.shape[0]
        else:
            outer = (states * weights[:, None]).T @ states
    else:
        mean_r = states.mean(axis=0) if weights is None else (weights @ states.reshape(-1, 9)).reshape(3, 3)
        outer = _outer_from_mean_rotation(mean_r)
    q, spread = quaternion_mean(outer)
    return {"q0": float(q[0]), "q1": float(q[1]), "q2": float(q[2]), "q3": float(q[3]), "spread": spread}


def summarize(ensemble: ParticleEnsemble) -> dict:
    if ensemble.representation is Representation.PHASE:
        return phase_summary(ensemble.states)
    return so3_summary(ensemble.states, ensemble.representation)


# -- stepping ----------------------------------------------------------------


def _chunked(fn, threads, arrays, n):
    """Apply an element-wise kernel over particle chunks; results are independent of ``threads``."""
    if threads <= 1 or n < 2 * threads:
        return fn(*arrays)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(lambda lo_hi: fn(*(a[lo_hi[0] : lo_hi[1]] for a in arrays)), zip(bounds[:-1], bounds[1:]))
        )
    return parts


def _gain_step(ensemble: ParticleEnsemble, model: FilterModel, dz: float, dt: float, cfg: GainConfig):
    if model.tag is not ensemble.tag:
        raise ValueError(f"model is on {model.tag.value} but particles are on {ensemble.tag.value}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    basis = cfg.basis_for(ensemble.representation)
    group_states = ensemble.group_states()
    h = model.observe(group_states)
    system = assemble(basis, ensemble.states, h, backend=cfg.backend)
    gain = solve_gain(system, cfg.ridge)
    di = control_term(h, system.h_hat, dz, dt)
    db = math.sqrt(dt) * ensemble.noise.normal(ensemble.step, ensemble.n)
    if ensemble.tag is GroupTag.SO2:
        base = model.drift_at(group_states) * dt + model.diffusion[0] * db
    else:
        base = model.drift_at(group_states) * dt + db[:, None] * model.diffusion[None, :]
    diag = {}
    if cfg.diagnostics:
        diag = {"condition": system.condition_estimate, "span_residual": span_residual(basis, ensemble.states, h)}
    return gain, system, np.ascontiguousarray(base), di, diag


def _finish(ensemble, new_states, gain: GainCoefficients, system, dz, dt, norm_defect=0.0, diag=None):
    out = replace(ensemble, states=new_states, step=ensemble.step + 1, t=ensemble.t + dt)
    record = StepRecord(
        t=out.t,
        h_hat=system.h_hat,
        kappa=tuple(float(k) for k in gain.kappa),
        regularization_used=gain.regularization_used,
        summary=summarize(out),
        dz=float(dz),
        norm_defect=norm_defect,
        diagnostics=diag or {},
    )
    return out, record


def _kernels(cfg):
    return cfg.backend if cfg.backend is not None else default_kernels


def step_phase(ensemble: ParticleEnsemble, model: FilterModel, dz: float, dt: float, cfg: GainConfig = GainConfig()):
    if ensemble.representation is not Representation.PHASE:
        raise ValueError("step_phase needs phase particles")
    gain, system, base, di, diag = _gain_step(ensemble, model, dz, dt, cfg)
    k = _kernels(cfg)
    kappa = np.ascontiguousarray(gain.kappa)
    heun = k.heun_phase if gain.basis.modes == 1 else k.heun_fourier
    res = _chunked(lambda th, b, d: heun(th, b, d, kappa), cfg.threads, (ensemble.states, base, di), ensemble.n)
    new = np.concatenate(res) if isinstance(res, list) else res
    return _finish(ensemble, new, gain, system, dz, dt, diag=diag)


def step_quaternion(
    ensemble: ParticleEnsemble, model: FilterModel, dz: float, dt: float, cfg: GainConfig = GainConfig()
):
    if ensemble.representation is not Representation.QUATERNION:
        raise ValueError("step_quaternion needs quaternion particles")
    gain, system, base, di, diag = _gain_step(ensemble, model, dz, dt, cfg)
    k = _kernels(cfg)
    kappa = np.ascontiguousarray(gain.kappa)
    res = _chunked(lambda q, b, d: k.heun_quat(q, b, d, kappa), cfg.threads, (ensemble.states, base, di), ensemble.n)
    if isinstance(res, list):
        new = np.concatenate([r[0] for r in res])
        defect = max(r[1] for r in res)
    else:
        new, defect = res
    return _finish(ensemble, new, gain, system, dz, dt, norm_defect=defect, diag=diag)


def step_matrix(ensemble: ParticleEnsemble, model: FilterModel, dz: float, dt: float, cfg: GainConfig = GainConfig()):
    if ensemble.representation is not Representation.MATRIX:
        raise ValueError("step_matrix needs rotation-matrix particles")
    gain, system, base, di, diag = _gain_step(ensemble, model, dz, dt, cfg)
    k = _kernels(cfg)
    kappa = np.ascontiguousarray(gain.kappa)
    res = _chunked(lambda r, b, d: k.heun_matrix(r, b, d, kappa), cfg.threads, (ensemble.states, base, di), ensemble.n)
    new = np.concatenate(res) if isinstance(res, list) else res
    every = cfg.reorthonormalize_every
    if every and (ensemble.step + 1) % every == 0:
        new = reorthonormalize(new)
    return _finish(ensemble, new, gain, system, dz, dt, diag=diag)


STEPPERS = {
    Representation.PHASE: step_phase,
    Representation.MATRIX: step_matrix,
    Representation.QUATERNION: step_quaternion,
}


def step(ensemble: ParticleEnsemble, model: FilterModel, dz: float, dt: float, cfg: GainConfig = GainConfig()):
    return STEPPERS[ensemble.representation](ensemble, model, dz, dt, cfg)


def uniform_dt(t0: float, times: np.ndarray) -> float:
    """Common step of ``times`` (end-of-step times after ``t0``); rejects non-uniform grids."""
    times = np.asarray(times, dtype=float)
    steps = np.diff(np.concatenate([[t0], times]))
    dt = float(steps[0])
    if dt <= 0 or np.any(steps <= 0):
        raise ValueError("observation times must be strictly increasing")
    if np.any(np.abs(steps - dt) > 1e-9 * max(1.0, abs(dt))):
        raise ValueError("observation times must be uniformly spaced")
    return dt


def run_filter(
    model: FilterModel,
    ensemble: ParticleEnsemble,
    observations: Sequence[tuple[float, float]],
    cfg: GainConfig = GainConfig(),
    callback: Callable[[StepRecord, ParticleEnsemble], None] | None = None,
) -> list[StepRecord]:
    """Run the filter along ``(t, dZ)`` pairs, ``t`` being the end of each step.

    ``callback(record, ensemble)`` is called after every step with the
    updated ensemble.
    """
    obs = list(observations)
    if not obs:
        return []
    times = np.array([t for t, _ in obs])
    dt = uniform_dt(ensemble.t, times)
    stepper = STEPPERS[ensemble.representation]
    records = []
    for _, dz in obs:
        ensemble, rec = stepper(ensemble, model, float(dz), dt, cfg)
        records.append(rec)
        if callback is not None:
            callback(rec, ensemble)
    return records


def propagate(
    states: np.ndarray,
    representation: Representation,
    model: FilterModel,
    noise: NoiseStream,
    step_index: int,
    dt: float,
    backend=None,
):
    """Gain-free step of the signal model with the same geometric scheme.

    Used for the truth simulation and by the bootstrap filter.
    """
    k = backend if backend is not None else default_kernels
    n = states.shape[0]
    group = states
    if representation is Representation.QUATERNION and callable(model.drift):
        group = k.quat_to_rotation(np.ascontiguousarray(states))
    db = math.sqrt(dt) * noise.normal(step_index, n)
    if representation is Representation.PHASE:
        return wrap_phase(states + model.drift_at(group) * dt + model.diffusion[0] * db)
    base = np.ascontiguousarray(model.drift_at(group) * dt + db[:, None] * model.diffusion[None, :])
    if representation is Representation.QUATERNION:
        return k.advance_quat(np.ascontiguousarray(states), base)
    return k.heun_matrix(np.ascontiguousarray(states), base, np.zeros(n), np.zeros(4))


__all__ = [
    "FilterModel",
    "GainConfig",
    "ParticleEnsemble",
    "Representation",
    "StepRecord",
    "control_term",
    "propagate",
    "run_filter",
    "step",
    "step_matrix",
    "step_phase",
    "step_quaternion",
    "summarize",
]
