"""Compiled inner loops: tridiagonal sweeps and pointwise reaction flows.

Tridiagonal systems here are strictly diagonally dominant M-matrices, so the
Thomas algorithm runs without pivoting. A factorisation is the tuple
``(lower, inv_den, cprime)``.
"""

import math

import numba as nb
import numpy as np


def thomas_factor(lower, diag, upper):
    n = len(diag)
    low = np.zeros(n)
    low[1:] = lower
    inv_den = np.empty(n)
    cprime = np.zeros(n)
    den = diag[0]
    inv_den[0] = 1.0 / den
    if n > 1:
        cprime[0] = upper[0] * inv_den[0]
    for i in range(1, n):
        den = diag[i] - low[i] * cprime[i - 1]
        inv_den[i] = 1.0 / den
        if i < n - 1:
            cprime[i] = upper[i] * inv_den[i]
    return low, inv_den, cprime


@nb.njit(cache=True)
def solve_rows(low, inv_den, cprime, b, out):
    """Solve along axis 1 of ``b`` (one system per row). ``out`` may alias ``b``.

    Rows are processed in blocks so independent recurrences interleave.
    """
    m, n = b.shape
    B = 16
    prev = np.empty(B)
    for r0 in range(0, m, B):
        r1 = min(r0 + B, m)
        for r in range(r0, r1):
            prev[r - r0] = 0.0
        for i in range(n):
            li = low[i]
            di = inv_den[i]
            for r in range(r0, r1):
                val = (b[r, i] - li * prev[r - r0]) * di
                out[r, i] = val
                prev[r - r0] = val
        for i in range(n - 2, -1, -1):
            ci = cprime[i]
            for r in range(r0, r1):
                out[r, i] = out[r, i] - ci * out[r, i + 1]


@nb.njit(cache=True)
def solve_cols(low, inv_den, cprime, b, out):
    """Solve along axis 0 of ``b`` (one system per column). ``out`` may alias ``b``."""
    n, m = b.shape
    for c in range(m):
        out[0, c] = b[0, c] * inv_den[0]
    for i in range(1, n):
        li = low[i]
        di = inv_den[i]
        for c in range(m):
            out[i, c] = (b[i, c] - li * out[i - 1, c]) * di
    for i in range(n - 2, -1, -1):
        ci = cprime[i]
        for c in range(m):
            out[i, c] = out[i, c] - ci * out[i + 1, c]


@nb.njit(cache=True)
def logistic_flow(v, a, tau, out):
    flat_in = v.ravel()
    flat_out = out.ravel()
    if a == 0.0:
        for i in range(flat_in.size):
            x = flat_in[i]
            flat_out[i] = x / (1.0 + x * tau)
        return
    e = math.exp(a * tau)
    em1 = e - 1.0
    for i in range(flat_in.size):
        x = flat_in[i]
        flat_out[i] = a * x * e / (a + x * em1)


@nb.njit(cache=True)
def threshold_heun(v, a, theta, tau, out):
    flat_in = v.ravel()
    flat_out = out.ravel()
    inv = 1.0 / (1.0 - theta)
    for i in range(flat_in.size):
        x = flat_in[i]
        s = (x - theta) * inv
        k1 = a * x - (s * s * s if s > 0.0 else 0.0)
        y = x + tau * k1
        s = (y - theta) * inv
        k2 = a * y - (s * s * s if s > 0.0 else 0.0)
        flat_out[i] = x + 0.5 * tau * (k1 + k2)


@nb.njit(cache=True)
def min_and_finite(v):
    flat = v.ravel()
    lo = np.inf
    arg = -1
    for i in range(flat.size):
        x = flat[i]
        if not (x == x) or x == np.inf or x == -np.inf:
            return -np.inf, i, False
        if x < lo:
            lo = x
            arg = i
    return lo, arg, True


@nb.njit(cache=True)
def clip_negative(v, tol):
    flat = v.ravel()
    for i in range(flat.size):
        if flat[i] < 0.0:
            flat[i] = 0.0
