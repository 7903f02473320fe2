"""Fractional Laplacian ``(-d_xx)^alpha`` on the truncated road.

Two discretisations share one interface:

* ``spectral``: periodic FFT multiplier. ``symbol="exact"`` uses ``|xi|^(2 alpha)``;
  ``symbol="lattice"`` uses ``|2 sin(xi dx/2)/dx|^(2 alpha)``, the fractional power
  of the 3-point Laplacian, whose heat kernel stays positive for every alpha.
* ``quadrature``: singular-integral quadrature of the principal value with the
  field extended by its edge values beyond the grid and an analytic tail.

The road grid is cell centred, ``x_j = -X + (j + 1/2) dx``, so it is symmetric
under ``x -> -x``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.special import gamma

# FFT worker threads; set from the environment or through set_threads
WORKERS = max(1, int(os.environ.get("FRONTLAB_THREADS", "1") or 1))


def set_threads(n: int) -> None:
    global WORKERS
    WORKERS = max(1, int(n))


def c_alpha(alpha: float) -> float:
    """Normalisation of the singular integral matching the symbol ``|xi|^(2 alpha)`` in 1D."""
    return 4.0**alpha * gamma(0.5 + alpha) / (math.sqrt(math.pi) * abs(gamma(-alpha)))


def cauchy_kernel(t, x):
    """Heat kernel of ``(-d_xx)^(1/2)``: ``t / (pi (t^2 + x^2))``."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return t / (np.pi * (t * t + x * x))


def road_grid(X: float, nx: int) -> np.ndarray:
    dx = 2.0 * X / nx
    return -X + (np.arange(nx) + 0.5) * dx


def wavenumbers(X: float, nx: int) -> np.ndarray:
    """Non-negative wavenumbers of the real FFT on a ``2X``-periodic grid."""
    return 2.0 * np.pi * sfft.rfftfreq(nx, d=2.0 * X / nx)


@dataclass(frozen=True)
class FracOperator:
    alpha: float
    X: float
    nx: int
    method: str = "spectral"
    symbol: str = "exact"
    multiplier: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha out of range: {self.alpha}")
        if self.method not in ("spectral", "quadrature"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.symbol not in ("exact", "lattice"):
            raise ValueError(f"unknown symbol {self.symbol!r}")
        if self.nx < 4:
            raise ValueError("nx too small")
        mult = np.empty(0)
        wts = np.empty(0)
        if self.method == "spectral":
            xi = wavenumbers(self.X, self.nx)
            if self.symbol == "exact":
                mult = xi ** (2.0 * self.alpha)
            else:
                mult = np.abs(2.0 * np.sin(0.5 * xi * self.dx) / self.dx) ** (2.0 * self.alpha)
            mult.flags.writeable = False
        else:
            wts = _quadrature_weights(self.alpha, self.dx, self.nx)
            wts.flags.writeable = False
        object.__setattr__(self, "multiplier", mult)
        object.__setattr__(self, "weights", wts)

    @property
    def dx(self) -> float:
        return 2.0 * self.X / self.nx

    @property
    def grid(self) -> np.ndarray:
        return road_grid(self.X, self.nx)


def apply_frac_lap(op: FracOperator, field) -> np.ndarray:
    """Apply ``(-d_xx)^alpha`` to a road array."""
    u = np.asarray(field, dtype=float)
    if u.shape != (op.nx,):
        raise ValueError(f"length mismatch: field has shape {u.shape}, operator expects ({op.nx},)")
    if op.method == "spectral":
        return sfft.irfft(op.multiplier * sfft.rfft(u, workers=WORKERS), n=op.nx, workers=WORKERS)
    return _quadrature_apply(op, u)


def frac_heat_multiplier_step(op: FracOperator, field, dt: float, growth_rate: float = 0.0) -> np.ndarray:
    """Integrate ``w_t = -(-d_xx)^alpha w + r w`` exactly over ``dt``."""
    if op.method != "spectral":
        raise ValueError("frac_heat_multiplier_step needs a spectral operator")
    u = np.asarray(field, dtype=float)
    if u.shape != (op.nx,):
        raise ValueError(f"length mismatch: field has shape {u.shape}, operator expects ({op.nx},)")
    factor = np.exp((growth_rate - op.multiplier) * dt)
    return sfft.irfft(factor * sfft.rfft(u, workers=WORKERS), n=op.nx, workers=WORKERS)


# --- singular-integral quadrature -------------------------------------------------
#
# (-d_xx)^a u(x) = c_a int_0^inf w(z) z^(-1-2a) dz,  w(z) = 2u(x) - u(x+z) - u(x-z).
# With q(z) = w(z)/z^2 (smooth, q(0) = -u''(x)) the integrand is q(z) z^(1-2a),
# integrable at 0. q is interpolated piecewise linearly on z_k = k dx and
# integrated against z^(1-2a) exactly; beyond z = K dx both shifted values equal
# the edge values and the tail is closed in closed form.


def _quadrature_weights(alpha: float, dx: float, nx: int) -> np.ndarray:
    beta = 1.0 - 2.0 * alpha
    K = nx
    z = np.arange(K + 1) * dx
    a, b = z[:-1], z[1:]
    m0 = (b ** (beta + 1) - a ** (beta + 1)) / (beta + 1)
    m1 = (b ** (beta + 2) - a ** (beta + 2)) / (beta + 2)
    left = (b * m0 - m1) / dx
    right = (m1 - a * m0) / dx
    w = np.zeros(K + 1)
    w[:-1] += left
    w[1:] += right
    return w


def _quadrature_apply(op: FracOperator, u: np.ndarray) -> np.ndarray:
    n, dx, alpha = op.nx, op.dx, op.alpha
    W = op.weights
    K = n
    uL, uR = u[0], u[-1]
    idx = np.arange(n)
    acc = np.zeros(n)
    q1 = q2 = None
    for k in range(1, K + 1):
        up = u[np.minimum(idx + k, n - 1)]
        um = u[np.maximum(idx - k, 0)]
        qk = (2.0 * u - up - um) / (k * dx) ** 2
        acc += W[k] * qk
        if k == 1:
            q1 = qk
        elif k == 2:
            q2 = qk
    q0 = (4.0 * q1 - q2) / 3.0
    acc += W[0] * q0
    w_inf = 2.0 * u - uL - uR
    acc += w_inf * (K * dx) ** (-2.0 * alpha) / (2.0 * alpha)
    return c_alpha(alpha) * acc


# --- heat kernel tail ---------------------------------------------------------------


@dataclass(frozen=True)
class TailTable:
    alpha: float
    t: float
    x: np.ndarray
    ratio: np.ndarray
    far_field: np.ndarray
    bounded: bool
    last_decade_variation: float
    flattening: bool


def fractional_heat_kernel(alpha: float, t: float, X: float, nx: int, symbol: str = "exact"):
    """Periodic heat kernel ``G_alpha(t, j dx)`` for ``j = 0..nx/2`` on a ``2X`` box."""
    op = FracOperator(alpha, X, nx, "spectral", symbol)
    g = sfft.irfft(np.exp(-op.multiplier * t), n=nx) / op.dx
    offsets = np.arange(nx // 2 + 1) * op.dx
    return offsets, g[: nx // 2 + 1]


def kernel_tail_check(alpha: float, t: float, x_samples, *, X: float | None = None, nx: int | None = None,
                      max_variation: float = 0.2) -> TailTable:
    """Tabulate ``G_alpha(t, x) |x|^(1+2 alpha) / t`` on far-field samples.

    Samples closer than ``10 t^(1/(2 alpha))`` to the source are flagged as not
    far-field; samples beyond half the periodic box raise ``ValueError``.
    """
    xs = np.abs(np.asarray(x_samples, dtype=float))
    if xs.size == 0:
        raise ValueError("no samples")
    core = t ** (1.0 / (2.0 * alpha))
    if X is None:
        X = 50.0 * xs.max()
    if nx is None:
        dx_target = min(core / 8.0, xs.min() / 8.0 if xs.min() > 0 else core / 8.0)
        nx = int(2 ** math.ceil(math.log2(2.0 * X / dx_target)))
    if xs.max() > X / 2.0:
        raise ValueError(f"samples outside resolved domain: max |x| = {xs.max()} > X/2 = {X / 2}")
    offsets, g = fractional_heat_kernel(alpha, t, X, nx)
    if np.any(g <= 0):
        # restrict log-interpolation to the positive part
        pos = g > 0
        offsets, g = offsets[pos], g[pos]
    Gx = np.exp(np.interp(np.log(np.maximum(xs, offsets[1])), np.log(offsets[1:]), np.log(g[1:])))
    ratio = Gx * xs ** (1.0 + 2.0 * alpha) / t
    far = xs >= 10.0 * core
    ff = ratio[far]
    bounded = bool(ff.size > 0 and np.all(np.isfinite(ff)) and ff.min() > 0)
    if ff.size >= 2:
        xf = xs[far]
        last = ff[xf >= xf.max() / 10.0]
        variation = float(last.max() / last.min() - 1.0) if last.size else float("nan")
    else:
        variation = float("nan")
    return TailTable(alpha, t, xs, ratio, far, bounded, variation,
                     bool(np.isfinite(variation) and variation <= max_variation))
