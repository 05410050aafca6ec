# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-particle kernels.

Same functions and return values as ``_kernels_py``.  Assembly is a single
particle-major pass with a fixed sequential reduction order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, fabs, fmod, M_PI

cnp.import_array()

NAME = "cython"

cdef double TWO_PI = 2.0 * M_PI
cdef double SERIES_THRESHOLD = 1e-6


# -- basis closed forms: fill psi[4] and d[3][4] (row n, column l) ------------

cdef inline void _matrix_basis(const double* m, double* psi, double* d) noexcept nogil:
    # m is a row-major 3x3 rotation
    cdef double r11 = m[0], r12 = m[1], r13 = m[2]
    cdef double r21 = m[3], r22 = m[4], r23 = m[5]
    cdef double r31 = m[6], r32 = m[7], r33 = m[8]
    psi[0] = 0.5 * (r23 - r32)
    psi[1] = 0.5 * (r31 - r13)
    psi[2] = 0.5 * (r12 - r21)
    psi[3] = 0.5 * (r11 + r22 + r33 - 1.0)
    d[0] = -0.5 * (r22 + r33); d[1] = 0.5 * r12; d[2] = 0.5 * r13; d[3] = 0.5 * (r23 - r32)
    d[4] = 0.5 * r21; d[5] = -0.5 * (r11 + r33); d[6] = 0.5 * r23; d[7] = 0.5 * (r31 - r13)
    d[8] = 0.5 * r31; d[9] = 0.5 * r32; d[10] = -0.5 * (r11 + r22); d[11] = 0.5 * (r12 - r21)


cdef inline void _quat_basis(double q0, double q1, double q2, double q3, double* psi, double* d) noexcept nogil:
    # table is in the attitude convention: evaluate at conj(q)
    q1 = -q1
    q2 = -q2
    q3 = -q3
    psi[0] = 2.0 * q1 * q0
    psi[1] = 2.0 * q2 * q0
    psi[2] = 2.0 * q3 * q0
    psi[3] = 2.0 * q0 * q0 - 1.0
    d[0] = q1 * q1 - q0 * q0; d[1] = q1 * q2 + q3 * q0; d[2] = q1 * q3 - q2 * q0; d[3] = 2.0 * q1 * q0
    d[4] = q1 * q2 - q3 * q0; d[5] = q2 * q2 - q0 * q0; d[6] = q2 * q3 + q1 * q0; d[7] = 2.0 * q2 * q0
    d[8] = q1 * q3 + q2 * q0; d[9] = q2 * q3 - q1 * q0; d[10] = q3 * q3 - q0 * q0; d[11] = 2.0 * q3 * q0


cdef inline void _load9(const double[:, :, :] r, Py_ssize_t i, double* m) noexcept nogil:
    cdef int j
    for j in range(9):
        m[j] = r[i, j // 3, j % 3]


cdef inline void _gain3(const double* d, const double[:] kappa, double* k) noexcept nogil:
    cdef int n
    for n in range(3):
        k[n] = d[4 * n] * kappa[0] + d[4 * n + 1] * kappa[1] + d[4 * n + 2] * kappa[2] + d[4 * n + 3] * kappa[3]


# -- exponentials ------------------------------------------------------------

cdef inline void _quat_exp(double x, double y, double z, double* e) noexcept nogil:
    # quaternion of exp(v) for v = (x, y, z): (cos(a/2), sin(a/2) v / a)
    cdef double a = sqrt(x * x + y * y + z * z)
    cdef double s
    if a < SERIES_THRESHOLD:
        s = 0.5 - a * a / 48.0
    else:
        s = sin(0.5 * a) / a
    e[0] = cos(0.5 * a)
    e[1] = s * x
    e[2] = s * y
    e[3] = s * z


cdef inline void _qmul(const double* p, const double* q, double* out) noexcept nogil:
    out[0] = p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3]
    out[1] = p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2]
    out[2] = p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1]
    out[3] = p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]


cdef inline void _so3_exp(double x, double y, double z, double* m) noexcept nogil:
    cdef double a2 = x * x + y * y + z * z
    cdef double a = sqrt(a2)
    cdef double c1, c2
    if a < SERIES_THRESHOLD:
        c1 = 1.0 - a2 / 6.0
        c2 = 0.5 - a2 / 24.0
    else:
        c1 = sin(a) / a
        c2 = (1.0 - cos(a)) / a2
    m[0] = 1.0 - c2 * (y * y + z * z)
    m[4] = 1.0 - c2 * (x * x + z * z)
    m[8] = 1.0 - c2 * (x * x + y * y)
    m[1] = -c1 * z + c2 * x * y
    m[3] = c1 * z + c2 * x * y
    m[2] = c1 * y + c2 * x * z
    m[6] = -c1 * y + c2 * x * z
    m[5] = -c1 * x + c2 * y * z
    m[7] = c1 * x + c2 * y * z


cdef inline void _matmul3(const double* a, const double* b, double* out) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j]


# -- assembly ----------------------------------------------------------------

cdef double _mean(const double[:] h) noexcept nogil:
    cdef Py_ssize_t i, n = h.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += h[i]
    return s / n


def assemble_phase(const double[:] theta, const double[:] h):
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef double hhat, dh, s, c
    cdef double a00 = 0.0, a01 = 0.0, a11 = 0.0, b0 = 0.0, b1 = 0.0
    with nogil:
        hhat = _mean(h)
        for i in range(n):
            s = sin(theta[i])
            c = cos(theta[i])
            dh = h[i] - hhat
            a00 += c * c
            a01 -= c * s
            a11 += s * s
            b0 += dh * s
            b1 += dh * c
    a = np.array([[a00, a01], [a01, a11]]) / n
    b = np.array([b0, b1]) / n
    return a, b, hhat


cdef _assemble4(int kind, object states, const double[:] h):
    cdef const double[:, :, :] r
    cdef const double[:, :] q
    cdef Py_ssize_t i, n = h.shape[0]
    cdef int l, m
    cdef double psi[4]
    cdef double d[12]
    cdef double mi[9]
    cdef double acc_a[16]
    cdef double acc_b[4]
    cdef double hhat, dh
    if kind == 0:
        r = np.ascontiguousarray(states, dtype=np.float64)
    else:
        q = np.ascontiguousarray(states, dtype=np.float64)
    for l in range(16):
        acc_a[l] = 0.0
    for l in range(4):
        acc_b[l] = 0.0
    with nogil:
        hhat = _mean(h)
        for i in range(n):
            if kind == 0:
                _load9(r, i, mi)
                _matrix_basis(mi, psi, d)
            else:
                _quat_basis(q[i, 0], q[i, 1], q[i, 2], q[i, 3], psi, d)
            dh = h[i] - hhat
            for l in range(4):
                acc_b[l] += dh * psi[l]
                for m in range(l, 4):
                    acc_a[4 * l + m] += d[l] * d[m] + d[4 + l] * d[4 + m] + d[8 + l] * d[8 + m]
    a = np.empty((4, 4))
    b = np.empty(4)
    for l in range(4):
        b[l] = acc_b[l] / n
        for m in range(l, 4):
            a[l, m] = acc_a[4 * l + m] / n
            a[m, l] = a[l, m]
    return a, b, hhat


def assemble_matrix(r, const double[:] h):
    return _assemble4(0, r, h)


def assemble_quat(q, const double[:] h):
    return _assemble4(1, q, h)


# -- gains -------------------------------------------------------------------

def gain_phase(const double[:] theta, const double[:] kappa):
    cdef Py_ssize_t i, n = theta.shape[0]
    out = np.empty(n)
    cdef double[:] o = out
    with nogil:
        for i in range(n):
            o[i] = kappa[0] * cos(theta[i]) - kappa[1] * sin(theta[i])
    return out


def gain_matrix(const double[:, :, :] r, const double[:] kappa):
    cdef Py_ssize_t i, n = r.shape[0]
    cdef double psi[4]
    cdef double d[12]
    cdef double k[3]
    cdef double mi[9]
    out = np.empty((n, 3))
    cdef double[:, :] o = out
    with nogil:
        for i in range(n):
            _load9(r, i, mi)
            _matrix_basis(mi, psi, d)
            _gain3(d, kappa, k)
            o[i, 0] = k[0]
            o[i, 1] = k[1]
            o[i, 2] = k[2]
    return out


def gain_quat(const double[:, :] q, const double[:] kappa):
    cdef Py_ssize_t i, n = q.shape[0]
    cdef double psi[4]
    cdef double d[12]
    cdef double k[3]
    out = np.empty((n, 3))
    cdef double[:, :] o = out
    with nogil:
        for i in range(n):
            _quat_basis(q[i, 0], q[i, 1], q[i, 2], q[i, 3], psi, d)
            _gain3(d, kappa, k)
            o[i, 0] = k[0]
            o[i, 1] = k[1]
            o[i, 2] = k[2]
    return out


# -- Heun steps --------------------------------------------------------------

def heun_phase(const double[:] theta, const double[:] base, const double[:] di, const double[:] kappa):
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef double k0, k1, pred, x
    out = np.empty(n)
    cdef double[:] o = out
    with nogil:
        for i in range(n):
            k0 = kappa[0] * cos(theta[i]) - kappa[1] * sin(theta[i])
            pred = theta[i] + base[i] + k0 * di[i]
            k1 = kappa[0] * cos(pred) - kappa[1] * sin(pred)
            x = fmod(theta[i] + base[i] + 0.5 * (k0 + k1) * di[i], TWO_PI)
            if x < 0.0:
                x += TWO_PI
            if x >= TWO_PI:
                x = 0.0
            o[i] = x
    return out


def heun_quat(const double[:, :] q, const double[:, :] base, const double[:] di, const double[:] kappa):
    cdef Py_ssize_t i, n = q.shape[0]
    cdef int j
    cdef double psi[4]
    cdef double d[12]
    cdef double k0[3]
    cdef double k1[3]
    cdef double qi[4]
    cdef double e[4]
    cdef double p[4]
    cdef double nrm, dev = 0.0
    out = np.empty((n, 4))
    cdef double[:, :] o = out
    with nogil:
        for i in range(n):
            for j in range(4):
                qi[j] = q[i, j]
            _quat_basis(qi[0], qi[1], qi[2], qi[3], psi, d)
            _gain3(d, kappa, k0)
            _quat_exp(base[i, 0] + k0[0] * di[i], base[i, 1] + k0[1] * di[i], base[i, 2] + k0[2] * di[i], e)
            _qmul(qi, e, p)
            _quat_basis(p[0], p[1], p[2], p[3], psi, d)
            _gain3(d, kappa, k1)
            _quat_exp(base[i, 0] + 0.5 * (k0[0] + k1[0]) * di[i],
                      base[i, 1] + 0.5 * (k0[1] + k1[1]) * di[i],
                      base[i, 2] + 0.5 * (k0[2] + k1[2]) * di[i], e)
            _qmul(qi, e, p)
            nrm = sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3])
            if fabs(nrm - 1.0) > dev:
                dev = fabs(nrm - 1.0)
            for j in range(4):
                o[i, j] = p[j] / nrm
    return out, dev


def heun_matrix(const double[:, :, :] r, const double[:, :] base, const double[:] di, const double[:] kappa):
    cdef Py_ssize_t i, n = r.shape[0]
    cdef int j
    cdef double psi[4]
    cdef double d[12]
    cdef double k0[3]
    cdef double k1[3]
    cdef double ri[9]
    cdef double e[9]
    cdef double p[9]
    out = np.empty((n, 3, 3))
    cdef double[:, :, :] o = out
    with nogil:
        for i in range(n):
            _load9(r, i, ri)
            _matrix_basis(ri, psi, d)
            _gain3(d, kappa, k0)
            _so3_exp(base[i, 0] + k0[0] * di[i], base[i, 1] + k0[1] * di[i], base[i, 2] + k0[2] * di[i], e)
            _matmul3(ri, e, p)
            _matrix_basis(p, psi, d)
            _gain3(d, kappa, k1)
            _so3_exp(base[i, 0] + 0.5 * (k0[0] + k1[0]) * di[i],
                     base[i, 1] + 0.5 * (k0[1] + k1[1]) * di[i],
                     base[i, 2] + 0.5 * (k0[2] + k1[2]) * di[i], e)
            _matmul3(ri, e, p)
            for j in range(9):
                o[i, j // 3, j % 3] = p[j]
    return out


def quat_to_rotation(const double[:, :] q):
    cdef Py_ssize_t i, n = q.shape[0]
    cdef double q0, q1, q2, q3
    out = np.empty((n, 3, 3))
    cdef double[:, :, :] o = out
    with nogil:
        for i in range(n):
            q0 = q[i, 0]
            q1 = q[i, 1]
            q2 = q[i, 2]
            q3 = q[i, 3]
            o[i, 0, 0] = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
            o[i, 1, 1] = q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3
            o[i, 2, 2] = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3
            o[i, 0, 1] = 2.0 * (q1 * q2 - q0 * q3)
            o[i, 1, 0] = 2.0 * (q1 * q2 + q0 * q3)
            o[i, 0, 2] = 2.0 * (q1 * q3 + q0 * q2)
            o[i, 2, 0] = 2.0 * (q1 * q3 - q0 * q2)
            o[i, 1, 2] = 2.0 * (q2 * q3 - q0 * q1)
            o[i, 2, 1] = 2.0 * (q2 * q3 + q0 * q1)
    return out


def advance_quat(const double[:, :] q, const double[:, :] base):
    """``q * exp(base)`` per particle, renormalized (the gain-free update)."""
    cdef Py_ssize_t i, n = q.shape[0]
    cdef int j
    cdef double qi[4]
    cdef double e[4]
    cdef double p[4]
    cdef double nrm
    out = np.empty((n, 4))
    cdef double[:, :] o = out
    with nogil:
        for i in range(n):
            for j in range(4):
                qi[j] = q[i, j]
            _quat_exp(base[i, 0], base[i, 1], base[i, 2], e)
            _qmul(qi, e, p)
            nrm = sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3])
            for j in range(4):
                o[i, j] = p[j] / nrm
    return out


# -- multi-mode Fourier basis on SO(2) ----------------------------------------

DEF MAX_MODES = 16


cdef inline void _harmonics(double th, int m, double* s, double* c) noexcept nogil:
    # sin/cos of k*theta, k = 1..m, by angle addition
    cdef int k
    s[0] = sin(th)
    c[0] = cos(th)
    for k in range(1, m):
        s[k] = s[k - 1] * c[0] + c[k - 1] * s[0]
        c[k] = c[k - 1] * c[0] - s[k - 1] * s[0]


cdef inline double _fourier_gain(double th, int m, const double[:] kappa, double* s, double* c) noexcept nogil:
    cdef int k
    cdef double g = 0.0
    _harmonics(th, m, s, c)
    for k in range(m):
        g += (k + 1) * (kappa[k] * c[k] - kappa[m + k] * s[k])
    return g


def assemble_fourier(const double[:] theta, const double[:] h, int modes):
    if modes < 1 or modes > MAX_MODES:
        raise ValueError(f"modes must be in 1..{MAX_MODES}")
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef int l, j, L = 2 * modes
    cdef double hhat, dh
    cdef double s[MAX_MODES]
    cdef double c[MAX_MODES]
    cdef double psi[2 * MAX_MODES]
    cdef double d[2 * MAX_MODES]
    a = np.zeros((L, L))
    b = np.zeros(L)
    cdef double[:, :] av = a
    cdef double[:] bv = b
    with nogil:
        hhat = _mean(h)
        for i in range(n):
            _harmonics(theta[i], modes, s, c)
            for l in range(modes):
                psi[l] = s[l]
                psi[modes + l] = c[l]
                d[l] = (l + 1) * c[l]
                d[modes + l] = -(l + 1) * s[l]
            dh = h[i] - hhat
            for l in range(L):
                bv[l] += dh * psi[l]
                for j in range(l, L):
                    av[l, j] += d[l] * d[j]
        for l in range(L):
            bv[l] /= n
            for j in range(l, L):
                av[l, j] /= n
                av[j, l] = av[l, j]
    return a, b, hhat


def heun_fourier(const double[:] theta, const double[:] base, const double[:] di, const double[:] kappa):
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef int m = kappa.shape[0] // 2
    if m < 1 or m > MAX_MODES or kappa.shape[0] != 2 * m:
        raise ValueError("kappa must hold 2 * modes coefficients")
    cdef double k0, k1, pred, x
    cdef double s[MAX_MODES]
    cdef double c[MAX_MODES]
    out = np.empty(n)
    cdef double[:] o = out
    with nogil:
        for i in range(n):
            k0 = _fourier_gain(theta[i], m, kappa, s, c)
            pred = theta[i] + base[i] + k0 * di[i]
            k1 = _fourier_gain(pred, m, kappa, s, c)
            x = fmod(theta[i] + base[i] + 0.5 * (k0 + k1) * di[i], TWO_PI)
            if x < 0.0:
                x += TWO_PI
            if x >= TWO_PI:
                x = 0.0
            o[i] = x
    return out
