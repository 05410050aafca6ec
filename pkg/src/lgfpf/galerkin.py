"""Galerkin approximation of the gain-function Poisson equation.

The potential is expanded as ``phi = sum_l kappa_l psi_l`` and the weak form
is tested against each ``psi_l``, which gives the ``L x L`` system
``A kappa = b`` with particle averages::

    A[l, m] = 1/N sum_i sum_n (E_n psi_l)(X_i) (E_n psi_m)(X_i)
    b[l]    = 1/N sum_i (h(X_i) - h_hat) psi_l(X_i)

The gain coordinates are then ``k_n(x) = sum_l kappa_l (E_n psi_l)(x)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .basis import EVALUATORS, BasisId
from .lie import (
    AlgebraVector,
    GroupElement,
    GroupTag,
    UnitQuaternion,
    algebra_basis,
    phase_from_so2,
    quat_to_rotation_batch,
    rotation_to_quat_batch,
)

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class GalerkinSystem:
    basis: BasisId
    A: np.ndarray
    b: np.ndarray
    n: int
    h_hat: float
    condition_estimate: float


@dataclass(frozen=True)
class GainCoefficients:
    kappa: np.ndarray
    basis: BasisId
    regularization_used: float = 0.0


def _single_state(basis: BasisId, x):
    """Convert one group point to the batch layout the basis evaluator expects."""
    if isinstance(x, UnitQuaternion):
        if basis.tag is not GroupTag.SO3:
            raise ValueError(f"{basis.value} needs an SO(2) point, got a quaternion")
        q = x.as_array()[None, :]
        return q if basis is BasisId.QUATERNION_SO3 else quat_to_rotation_batch(q)
    if isinstance(x, GroupElement):
        if x.tag is not basis.tag:
            raise ValueError(f"{basis.value} needs an {basis.tag.value} point, got {x.tag.value}")
        if basis.modes:
            return np.array([phase_from_so2(x)])
        if basis is BasisId.QUATERNION_SO3:
            return rotation_to_quat_batch(x.matrix)[None, :]
        return x.matrix[None, :, :]
    if basis.modes and np.ndim(x) == 0:
        return np.array([float(x)])
    raise ValueError(f"cannot evaluate {basis.value} at {x!r}")


def evaluate_basis(basis: BasisId, x):
    """Basis values ``psi`` (length L) and derivatives ``D`` (d x L) at one point.

    ``x`` may be a :class:`GroupElement`, a :class:`UnitQuaternion`, or a bare
    phase for the SO(2) basis.
    """
    psi, d = EVALUATORS[basis](_single_state(basis, x))
    return psi[0], d[0]


def evaluate_basis_batch(basis: BasisId, states: np.ndarray):
    """Batch version of :func:`evaluate_basis` on native representation arrays."""
    return EVALUATORS[basis](states)


_ASSEMBLERS = {
    BasisId.FOURIER1_SO2: "assemble_phase",
    BasisId.MATRIX_SO3: "assemble_matrix",
    BasisId.QUATERNION_SO3: "assemble_quat",
}


def assemble(basis: BasisId, ensemble, h_values, backend=None) -> GalerkinSystem:
    """Particle-average assembly of ``A`` and ``b``.

    ``ensemble`` is either a :class:`~lgfpf.filter.ParticleEnsemble` or the
    raw state array in the basis' representation.
    """
    states = getattr(ensemble, "states", ensemble)
    h = np.ascontiguousarray(h_values, dtype=float)
    if h.ndim != 1 or h.shape[0] == 0:
        raise ValueError("assemble needs at least one particle")
    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite observation values")
    states = np.ascontiguousarray(states, dtype=float)
    if states.shape[0] != h.shape[0]:
        raise ValueError(f"{states.shape[0]} states but {h.shape[0]} h values")
    k = kernels if backend is None else backend
    if basis in _ASSEMBLERS:
        a, b, hhat = getattr(k, _ASSEMBLERS[basis])(states, h)
    else:
        a, b, hhat = k.assemble_fourier(states, h, basis.modes)
    return GalerkinSystem(basis, a, b, h.shape[0], float(hhat), _condition(a))


def _condition(a: np.ndarray) -> float:
    w = np.linalg.eigvalsh(a)
    if w[0] <= 0.0:
        return np.inf
    return float(w[-1] / w[0])


def _try_solve(a, b, lam):
    m = a + lam * np.eye(a.shape[0])
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None
    if _condition(m) > COND_LIMIT:
        return None
    y = np.linalg.solve(c, b)
    return np.linalg.solve(c.T, y)


def solve_gain(system: GalerkinSystem, ridge: float = 0.0) -> GainCoefficients:
    """Solve ``(A + lam I) kappa = b``.

    Starts from ``lam = max(ridge, 0)``.  If the Cholesky factorization fails
    or the condition number exceeds ``1e12``, ``lam`` is raised to
    ``1e-8 * trace(A) / L`` and then by factors of ten until it succeeds.
    """
    a, b = system.A, system.b
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite Galerkin system")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    lam = float(ridge)
    kappa = _try_solve(a, b, lam)
    if kappa is None:
        size = a.shape[0]
        scale = np.trace(a) / size
        lam = max(lam, RIDGE_SCALE * (scale if scale > 0 else 1.0))
        kappa = _try_solve(a, b, lam)
        while kappa is None:
            lam *= 10.0
            kappa = _try_solve(a, b, lam)
        log.warning("singular Galerkin matrix, ridge escalated to %.3e", lam)
    return GainCoefficients(kappa, system.basis, lam)


def gain_at(basis: BasisId, kappa: GainCoefficients, x) -> AlgebraVector:
    if kappa.basis is not basis:
        raise ValueError(f"coefficients were solved for {kappa.basis.value}, not {basis.value}")
    _, d = evaluate_basis(basis, x)
    return AlgebraVector(basis.tag, d @ kappa.kappa)


def upsilon(kappa) -> np.ndarray:
    k1, k2, k3, k4 = np.asarray(kappa, dtype=float)
    return np.array([[k4, -k3, k2], [k3, k4, -k1], [-k2, k1, k4]])


def gain_trace_form(kappa: GainCoefficients, r) -> AlgebraVector:
    """Gain coordinates ``k_n = 1/2 Tr(R E_n Y)`` with ``Y`` built from kappa.

    Valid for both SO(3) bases; ``r`` may also be a :class:`UnitQuaternion`.
    """
    if kappa.basis.tag is not GroupTag.SO3:
        raise ValueError("trace form is defined for the SO(3) bases only")
    if isinstance(r, UnitQuaternion):
        m = quat_to_rotation_batch(r.as_array())
    elif isinstance(r, GroupElement) and r.tag is GroupTag.SO3:
        m = r.matrix
    else:
        raise ValueError("gain_trace_form needs an SO(3) element")
    y = upsilon(kappa.kappa)
    k = [0.5 * np.trace(m @ algebra_basis(GroupTag.SO3, n) @ y) for n in (1, 2, 3)]
    return AlgebraVector(GroupTag.SO3, np.array(k))


def span_residual(basis: BasisId, states: np.ndarray, h_values) -> float:
    """Relative empirical L2 residual of ``h - h_hat`` against the centred span.

    Zero when ``h`` is (empirically) a combination of the basis functions plus
    a constant; a diagnostic for how well the basis suits the observation.
    """
    psi, _ = evaluate_basis_batch(basis, states)
    h = np.asarray(h_values, dtype=float)
    dh = h - h.mean()
    norm = np.sqrt(np.mean(dh * dh))
    if norm == 0.0:
        return 0.0
    centred = psi - psi.mean(axis=0)
    coef, *_ = np.linalg.lstsq(centred, dh, rcond=None)
    res = dh - centred @ coef
    return float(np.sqrt(np.mean(res * res)) / norm)
