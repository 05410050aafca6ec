"""Reference filters used to judge the FPF.

* :func:`ks_grid_step` -- the conditional density on S^1 on a uniform grid.
  Lie splitting: an explicit Fokker-Planck substep for
  ``dp/dt = -d/dtheta(omega p) + sigma^2/2 d2p/dtheta2`` followed by the
  multiplicative observation update ``p <- p exp(h dZ - h^2 dt / 2)``.
* :func:`sir_step` -- a bootstrap particle filter with systematic
  resampling, on phases or quaternions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import kernels
from .filter import FilterModel, Representation, phase_summary, propagate, so3_summary
from .lie import TWO_PI, GroupTag
from .rng import NoiseStream

log = logging.getLogger(__name__)

CFL_DIFFUSION = 0.4
MAX_SUBSTEPS = 100_000


class OracleError(ArithmeticError):
    """Numerical failure of a reference filter."""


@dataclass(frozen=True)
class GridDensity:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 4:
            raise ValueError("grid density needs a 1-D array of at least 4 values")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.m

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.m) * self.dtheta

    def mass(self) -> float:
        return float(self.values.sum() * self.dtheta)

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], m: int = 512) -> "GridDensity":
        theta = np.arange(m) * (TWO_PI / m)
        v = np.clip(np.asarray(f(theta), dtype=float), 0.0, None)
        return cls(v / (v.sum() * TWO_PI / m))

    @classmethod
    def uniform(cls, m: int = 512) -> "GridDensity":
        return cls(np.full(m, 1.0 / TWO_PI))

    @classmethod
    def von_mises(cls, mean: float, concentration: float, m: int = 512) -> "GridDensity":
        return cls.from_function(lambda th: np.exp(concentration * (np.cos(th - mean) - 1.0)), m)

    @classmethod
    def point(cls, theta0: float, m: int = 512) -> "GridDensity":
        """All mass in the cell nearest ``theta0``."""
        v = np.zeros(m)
        v[int(round((theta0 % TWO_PI) / (TWO_PI / m))) % m] = m / TWO_PI
        return cls(v)


def grid_moments(p: GridDensity, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Quadrature ``sum_j f(theta_j) p_j dtheta`` (the trapezoid rule on a periodic grid)."""
    return float(np.sum(np.asarray(f(p.theta), dtype=float) * p.values) * p.dtheta)


def circular_variance(p: GridDensity) -> float:
    return 1.0 - math.hypot(grid_moments(p, np.cos), grid_moments(p, np.sin))


def _substeps(dt, dtheta, sigma, omega_max):
    limits = []
    if sigma > 0:
        limits.append(CFL_DIFFUSION * dtheta * dtheta / (sigma * sigma))
    if omega_max > 0:
        limits.append(dtheta / omega_max)
    if not limits:
        return 1
    return max(1, math.ceil(dt / min(limits) - 1e-12))


def fokker_planck(p: np.ndarray, omega: np.ndarray, sigma: float, dt: float, dtheta: float) -> np.ndarray:
    n = _substeps(dt, dtheta, sigma, float(np.max(np.abs(omega))))
    if n > MAX_SUBSTEPS:
        raise OracleError(f"grid step needs {n} substeps (cap {MAX_SUBSTEPS}); reduce dt or the grid size")
    h = dt / n
    adv = h / (2.0 * dtheta)
    dif = 0.5 * sigma * sigma * h / (dtheta * dtheta)
    for _ in range(n):
        flux = omega * p
        p = p - adv * (np.roll(flux, -1) - np.roll(flux, 1)) + dif * (np.roll(p, -1) - 2.0 * p + np.roll(p, 1))
    return p


def ks_grid_step(p: GridDensity, model: FilterModel, dz: float, dt: float) -> GridDensity:
    if model.tag is not GroupTag.SO2:
        raise ValueError("the grid oracle is for SO(2) models")
    theta = p.theta
    v = fokker_planck(p.values, model.drift_at(theta), float(model.diffusion[0]), dt, p.dtheta)
    neg = v < 0.0
    if neg.any():
        log.debug("grid oracle clipped negative mass %.3e", -v[neg].sum() * p.dtheta)
        v = np.where(neg, 0.0, v)
    h = model.observe(theta)
    logl = h * dz - 0.5 * h * h * dt
    v = v * np.exp(logl - logl.max())
    total = v.sum() * p.dtheta
    if not np.isfinite(total) or total <= 0.0:
        raise OracleError("grid density lost all mass")
    return GridDensity(v / total)


# -- bootstrap particle filter -----------------------------------------------


@dataclass(frozen=True)
class WeightedEnsemble:
    representation: Representation
    states: np.ndarray
    weights: np.ndarray
    noise: NoiseStream
    resample_noise: NoiseStream
    step: int = 0
    t: float = 0.0
    resampled: bool = False

    @classmethod
    def uniform(cls, representation, states, noise, resample_noise, t=0.0):
        n = np.asarray(states).shape[0]
        return cls(representation, np.asarray(states, dtype=float), np.full(n, 1.0 / n), noise, resample_noise, 0, t)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights * self.weights))

    def summary(self) -> dict:
        if self.representation is Representation.PHASE:
            return phase_summary(self.states, self.weights)
        return so3_summary(self.states, self.representation, self.weights)


def systematic_resample(weights: np.ndarray, u: float) -> np.ndarray:
    """Indices for systematic resampling with offset ``u`` in [0, 1)."""
    n = weights.size
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, (u + np.arange(n)) / n, side="right")


def sir_step(ens: WeightedEnsemble, model: FilterModel, dz: float, dt: float, backend=None) -> WeightedEnsemble:
    states = propagate(ens.states, ens.representation, model, ens.noise, ens.step, dt, backend)
    group = kernels.quat_to_rotation(states) if ens.representation is Representation.QUATERNION else states
    h = model.observe(group)
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.log(ens.weights) + h * dz - 0.5 * h * h * dt
    top = np.max(logw)
    if not np.isfinite(top):
        raise OracleError(f"all particle weights vanished at t={ens.t + dt:.6g} (max log-weight {top})")
    w = np.exp(logw - top)
    w /= w.sum()
    out = replace(ens, states=states, weights=w, step=ens.step + 1, t=ens.t + dt, resampled=False)
    if out.ess < 0.5 * out.n:
        idx = systematic_resample(w, float(ens.resample_noise.uniform(ens.step)))
        out = replace(out, states=states[idx], weights=np.full(out.n, 1.0 / out.n), resampled=True)
    return out
