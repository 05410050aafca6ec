"""Pure numpy implementation of the per-particle kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``LGFPF_BACKEND=python`` is set.
"""

import numpy as np

from . import basis
from .lie import TWO_PI, quat_exp_batch, quat_multiply, quat_to_rotation_batch, so3_exp_batch

NAME = "python"


def _assemble(psi, d, h):
    n = h.shape[0]
    hhat = h.sum() / n
    b = ((h - hhat)[:, None] * psi).sum(axis=0) / n
    a = np.einsum("inl,inm->lm", d, d) / n
    return a, b, hhat


def assemble_phase(theta, h):
    psi, d = basis.fourier_so2(theta)
    return _assemble(psi, d, np.asarray(h, dtype=float))


def assemble_matrix(r, h):
    psi, d = basis.matrix_so3(r)
    return _assemble(psi, d, np.asarray(h, dtype=float))


def assemble_quat(q, h):
    psi, d = basis.quaternion_so3(q)
    return _assemble(psi, d, np.asarray(h, dtype=float))


def gain_phase(theta, kappa):
    return kappa[0] * np.cos(theta) - kappa[1] * np.sin(theta)


def gain_matrix(r, kappa):
    _, d = basis.matrix_so3(r)
    return d @ kappa


def gain_quat(q, kappa):
    _, d = basis.quaternion_so3(q)
    return d @ kappa


def heun_phase(theta, base, di, kappa):
    k0 = gain_phase(theta, kappa)
    pred = theta + base + k0 * di
    k1 = gain_phase(pred, kappa)
    out = np.mod(theta + base + 0.5 * (k0 + k1) * di, TWO_PI)
    out[out >= TWO_PI] = 0.0
    return out


def heun_quat(q, base, di, kappa):
    """Returns the renormalized quaternions and the largest pre-normalization norm error."""
    di = di[:, None]
    k0 = gain_quat(q, kappa)
    pred = quat_multiply(q, quat_exp_batch(base + k0 * di))
    k1 = gain_quat(pred, kappa)
    out = quat_multiply(q, quat_exp_batch(base + 0.5 * (k0 + k1) * di))
    norms = np.sqrt(np.einsum("ij,ij->i", out, out))
    dev = float(np.abs(norms - 1.0).max()) if out.shape[0] else 0.0
    return out / norms[:, None], dev


def heun_matrix(r, base, di, kappa):
    di = di[:, None]
    k0 = gain_matrix(r, kappa)
    pred = r @ so3_exp_batch(base + k0 * di)
    k1 = gain_matrix(pred, kappa)
    return r @ so3_exp_batch(base + 0.5 * (k0 + k1) * di)


def quat_to_rotation(q):
    return quat_to_rotation_batch(q)


def advance_quat(q, base):
    out = quat_multiply(q, quat_exp_batch(base))
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def assemble_fourier(theta, h, modes):
    psi, d = basis.fourier_modes_so2(theta, modes)
    return _assemble(psi, d, np.asarray(h, dtype=float))


def _fourier_gain(theta, kappa):
    _, d = basis.fourier_modes_so2(theta, kappa.shape[0] // 2)
    return d[:, 0, :] @ kappa


def heun_fourier(theta, base, di, kappa):
    k0 = _fourier_gain(theta, kappa)
    k1 = _fourier_gain(theta + base + k0 * di, kappa)
    out = np.mod(theta + base + 0.5 * (k0 + k1) * di, TWO_PI)
    out[out >= TWO_PI] = 0.0
    return out
