"""Dirichlet KPP transients on the half line.

Problem: ``v_t - v_yy = v - g(v)`` on ``y > 0``, ``v(t, 0) = 0``,
``v(0, y) = eps * 1_[1/2, 1](y)``. While ``v`` stays below the threshold of
``g`` the solution is the image-method formula of :func:`linear_dirichlet_exact`.
``T_eps`` is the first time ``v(t, 1)`` reaches a fixed level ``lam``; it grows
like ``ln(1/eps) + (3/2) ln ln(1/eps)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, stats
from scipy.special import erf

from .field import ColumnScheme, dirichlet_1d_column_solve
from .model import BracketError, Nonlinearity, positive_zero_v0

Z0 = math.sqrt(2.5)
M0 = Z0 * math.exp(-0.5)


def linear_dirichlet_exact(t, y, epsilon):
    """``eps e^t int_{1/2}^{1} [G(y-s) - G(y+s)] ds`` with the heat kernel ``G``.

    Closed form: ``eps e^t / 2 [erf((y-1/2)/r) - erf((y-1)/r) + erf((y+1/2)/r) - erf((y+1)/r)]``,
    ``r = 2 sqrt(t)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be > 0")
    y = np.asarray(y, dtype=float)
    r = 2.0 * np.sqrt(t)
    bracket = erf((y - 0.5) / r) - erf((y - 1.0) / r) + erf((y + 0.5) / r) - erf((y + 1.0) / r)
    return epsilon * np.exp(t) * 0.5 * bracket


def linear_dirichlet_quad(t: float, y: float, epsilon: float) -> float:
    """Direct adaptive quadrature of the image-kernel integral (oracle for the erf form)."""
    if t <= 0:
        raise ValueError("t must be > 0")

    def kern(s):
        return (math.exp(-(y - s) ** 2 / (4 * t)) - math.exp(-(y + s) ** 2 / (4 * t))) / math.sqrt(4 * math.pi * t)

    val, _ = integrate.quad(kern, 0.5, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return epsilon * math.exp(t) * val


def profile_maximiser():
    """Maximiser and maximum of ``m(z) = z exp(-z^2/5)`` by golden-section search."""
    res = optimize.minimize_scalar(lambda z: -z * math.exp(-z * z / 5.0), bracket=(0.5, 1.5, 4.0),
                                   method="golden", tol=1e-12)
    return float(res.x), float(-res.fun)


@dataclass(frozen=True)
class EnvelopeReport:
    t: float
    epsilon: float
    C: float  # smallest constant making the envelope hold on the sampled y-range
    holds: bool
    argmax_y: float
    predicted_argmax: float
    argmax_rel_error: float
    argmax_ok: bool


def envelope(t, y, epsilon, C):
    """``C eps (e^t / t) (y / sqrt t) exp(-y^2 / (5 t))``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    return C * epsilon * np.exp(t) / t * (y / np.sqrt(t)) * np.exp(-y * y / (5.0 * t))


def envelope_bound_check(t: float, epsilon: float, n: int = 20001) -> EnvelopeReport:
    """Measure the envelope constant at time ``t`` on ``y in [1, 20 sqrt t]``.

    Also locates the y-argmax of the exact linear solution and compares it with
    ``z0 sqrt t``.
    """
    if t < 2:
        raise ValueError("envelope check needs t >= 2")
    y = np.linspace(1.0, 20.0 * math.sqrt(t), n)
    v = linear_dirichlet_exact(t, y, epsilon)
    ref = envelope(t, y, epsilon, 1.0)
    C = float(np.max(v / ref))
    holds = bool(np.all(v <= envelope(t, y, epsilon, C) * (1 + 1e-12)))
    yy = np.linspace(0.0, 20.0 * math.sqrt(t), n)
    ya = float(yy[np.argmax(linear_dirichlet_exact(t, yy, epsilon))])
    pred = Z0 * math.sqrt(t)
    err = abs(ya - pred) / pred
    return EnvelopeReport(t, epsilon, C, holds, ya, pred, err, err <= 0.15)


def envelope_constant(t_grid=None, epsilon: float = 1.0) -> float:
    """Smallest ``C`` for which the envelope holds at every ``t`` of ``t_grid`` (default ``[2, 40]``)."""
    if t_grid is None:
        t_grid = np.linspace(2.0, 40.0, 77)
    return max(envelope_bound_check(float(t), epsilon, n=4001).C for t in t_grid)


def solve_T1(epsilon: float, theta: float, C: float, m0: float = M0) -> float:
    """Root ``T >= 2`` of ``e^T / T = theta / (m0 C eps)`` by bisection."""
    rhs = theta / (m0 * C * epsilon)
    return solve_exp_over_t(rhs)


def solve_exp_over_t(rhs: float, power: float = 1.0, tol: float = 1e-10) -> float:
    """Root of ``e^T / T^power = rhs`` on the increasing branch ``T >= 2 power``."""
    lo = 2.0 * power
    h = lambda T: T - power * math.log(T) - math.log(rhs)  # noqa: E731
    if h(lo) > 1e-14:
        raise ValueError(f"right-hand side {rhs:.6g} below the branch minimum e^{lo:g}/{lo:g}^{power:g}")
    if h(lo) >= -1e-14:
        return lo
    hi = lo + 1.0
    while h(hi) < 0:
        hi *= 2.0
    return optimize.bisect(h, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


def eigenvalue(L: float) -> float:
    """First Dirichlet eigenvalue of ``-d_yy`` on ``[1, L]``."""
    return math.pi**2 / (L - 1.0) ** 2


def subsolution_constant(L: float, T1: float, epsilon: float = 1.0, n: int = 4001) -> float:
    """``min_{y in [1, L]} v_lin(T1, y) sqrt(T1) / eps``, measured on a dense grid."""
    y = np.linspace(1.0, L, n)
    return float(np.min(linear_dirichlet_exact(T1, y, epsilon)) * math.sqrt(T1) / epsilon)


def eigen_subsolution(L: float, t, y, epsilon: float, T1: float, c_L: float | None = None):
    """``(eps c_L / sqrt T1) exp((1 - lambda_1)(t - T1)) sin(pi (y - 1)/(L - 1))``."""
    if L <= 1:
        raise ValueError("need L > 1")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y < 1.0) or np.any(y > L):
        raise ValueError("y outside [1, L]")
    if np.any(t < T1):
        raise ValueError("t before T1")
    if c_L is None:
        c_L = subsolution_constant(L, T1)
    lam1 = eigenvalue(L)
    return epsilon * c_L / math.sqrt(T1) * np.exp((1.0 - lam1) * (t - T1)) * np.sin(math.pi * (y - 1.0) / (L - 1.0))


def subsolution_window(L: float, T1: float, theta: float) -> tuple[float, float]:
    return T1, T1 + math.log(theta**2 * T1) / (2.0 * (1.0 - eigenvalue(L)))


# --- steady state -------------------------------------------------------------------


@dataclass(frozen=True)
class SteadyProfile:
    y: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    slope0: float
    v0: float
    residual: float
    energy_drift: float

    def __call__(self, y):
        return np.interp(y, self.y, self.w, right=self.v0)


def _shoot(nl: Nonlinearity, v0: float, s: float, Y: float) -> int:
    """+1 if the orbit overshoots ``v0``, -1 if it turns back, 0 if it reaches Y in between."""

    def rhs(_, z):
        return [z[1], -float(nl.a * z[0] - nl.g(z[0]))]

    over = lambda _, z: z[0] - v0  # noqa: E731
    over.terminal = True
    back = lambda _, z: z[1]  # noqa: E731
    back.terminal = True
    back.direction = -1
    sol = integrate.solve_ivp(rhs, (0.0, Y), [0.0, s], events=(over, back), rtol=1e-12, atol=1e-14)
    if sol.t_events[0].size:
        return 1
    if sol.t_events[1].size:
        return -1
    return 0


def steady_state(nl: Nonlinearity, Y: float = 30.0, tol: float = 1e-10) -> SteadyProfile:
    """Solve ``-w'' = f(w)``, ``w(0) = 0``, ``w -> v0`` on ``[0, Y]``.

    The slope ``w'(0)`` is found by bisection on overshoot/turn-back of the shot
    orbit; the profile is then polished by collocation with ``w(Y) = v0``.
    """
    if Y < 30:
        raise ValueError("steady_state needs Y >= 30")
    v0 = positive_zero_v0(nl)
    F0 = float(nl.primitive(v0))
    s_ref = math.sqrt(2.0 * F0)
    lo, hi = 0.5 * s_ref, 1.5 * s_ref
    if _shoot(nl, v0, lo, Y) != -1 or _shoot(nl, v0, hi, Y) != 1:
        raise BracketError("shooting bracket does not separate undershoot from overshoot")
    while hi - lo > 1e-13 * s_ref:
        mid = 0.5 * (lo + hi)
        r = _shoot(nl, v0, mid, Y)
        if r > 0:
            hi = mid
        elif r < 0:
            lo = mid
        else:
            lo = hi = mid
    s = 0.5 * (lo + hi)

    def fun(_, z):
        return np.vstack([z[1], -(nl.a * z[0] - nl.g(z[0]))])

    def bc(za, zb):
        return np.array([za[0], zb[0] - v0])

    y = np.linspace(0.0, Y, 2001)
    # initial guess from the first integral: w' = sqrt(2 (F0 - F(w)))
    guess = integrate.solve_ivp(lambda _, w: [math.sqrt(max(2.0 * (F0 - float(nl.primitive(w[0]))), 0.0))],
                                (0.0, Y), [0.0], t_eval=y, rtol=1e-10, atol=1e-12).y[0]
    guess = np.minimum(guess, v0)
    dguess = np.sqrt(np.maximum(2.0 * (F0 - nl.primitive(guess)), 0.0))
    sol = integrate.solve_bvp(fun, bc, y, np.vstack([guess, dguess]), tol=tol, max_nodes=200000)
    if not sol.success:
        raise BracketError(f"collocation failed: {sol.message}")
    yy = np.linspace(0.0, Y, 20001)
    w, dw = sol.sol(yy)
    energy = 0.5 * dw**2 + nl.primitive(w)
    return SteadyProfile(yy, w, dw, float(dw[0]), v0, float(np.max(sol.rms_residuals)),
                         float(np.max(np.abs(energy - energy[0]))))


# --- transient timing ----------------------------------------------------------------


@dataclass(frozen=True)
class TransientGrid:
    Y: float = 60.0
    dy: float = 0.05
    dt: float = 0.01
    refine: int = 10
    t_max: float | None = None

    @property
    def ny(self) -> int:
        return int(round(self.Y / self.dy))


@dataclass(frozen=True)
class TransientResult:
    epsilon: float
    lambda_target: float
    T_eps: float
    T1_eps: float
    trace_t: np.ndarray
    trace_v: np.ndarray
    ratio: float
    T_linear: float  # crossing time of the linear solution, a lower bound for T_eps


def initial_column(grid: TransientGrid, epsilon: float) -> np.ndarray:
    """Cell averages of ``eps 1_[1/2, 1]`` on ``y_k = k dy``."""
    y = np.arange(grid.ny) * grid.dy
    lo = np.maximum(y - 0.5 * grid.dy, 0.5)
    hi = np.minimum(y + 0.5 * grid.dy, 1.0)
    return epsilon * np.clip(hi - lo, 0.0, None) / grid.dy


def node_index(grid: TransientGrid, y: float) -> int:
    k = int(round(y / grid.dy))
    if abs(k * grid.dy - y) > 1e-9:
        raise ValueError(f"y={y} must be a grid node (dy={grid.dy})")
    return k


def linear_crossing_time(epsilon: float, lam: float, y: float = 1.0) -> float:
    """First ``t`` with ``v_lin(t, y) = lam``."""
    h = lambda t: float(linear_dirichlet_exact(t, y, epsilon)) - lam  # noqa: E731
    lo = 1e-3
    hi = 1.0
    while h(hi) < 0:
        lo, hi = hi, hi * 1.5
    # the linear solution at y=1 is increasing once past its early dip
    return optimize.brentq(h, lo, hi, xtol=1e-12)


def measure_T_eps(epsilon: float, lambda_target: float, nl: Nonlinearity | None = None,
                  grid: TransientGrid | None = None, C: float | None = None) -> TransientResult:
    """Integrate the Dirichlet problem until ``v(t, 1)`` reaches ``lambda_target``.

    The bracketing step is redone with ``dt / refine`` and the crossing time is
    interpolated linearly between the two refined steps around it.
    """
    nl = Nonlinearity("threshold", 1.0, 0.3) if nl is None else nl
    grid = TransientGrid() if grid is None else grid
    theta = nl.theta
    v0 = positive_zero_v0(nl)
    if not epsilon < theta < lambda_target < v0:
        raise ValueError(f"need eps < theta < lambda < v0, got {epsilon}, {theta}, {lambda_target}, {v0:.6g}")
    k1 = node_index(grid, 1.0)
    T_lin = linear_crossing_time(epsilon, lambda_target)
    t_max = grid.t_max if grid.t_max is not None else 2.0 * T_lin + 10.0
    if grid.Y < 2.0 * T_lin + Z0 * math.sqrt(T_lin):
        raise ValueError(f"strip too short for this epsilon: need Y >= {2 * T_lin + Z0 * math.sqrt(T_lin):.4g}")
    coarse = ColumnScheme(grid.ny, grid.dy, grid.dt)
    fine = ColumnScheme(grid.ny, grid.dy, grid.dt / grid.refine)
    v = initial_column(grid, epsilon)
    ts, vs = [0.0], [v[k1]]
    t = 0.0
    n = 0
    while True:
        if t > t_max:
            raise RuntimeError(f"no crossing before t={t_max:.4g}; last v(t,1)={v[k1]:.6g}")
        w = dirichlet_1d_column_solve(v, nl, grid.dt, scheme=coarse)
        if w[k1] >= lambda_target:
            break
        v = w
        n += 1
        t = n * grid.dt
        ts.append(t)
        vs.append(v[k1])
    # redo the bracketing step finely
    h = grid.dt / grid.refine
    t_prev, v_prev = t, v[k1]
    for j in range(1, grid.refine + 1):
        v = dirichlet_1d_column_solve(v, nl, h, scheme=fine)
        tj = t + j * h
        if v[k1] >= lambda_target:
            T = t_prev + (lambda_target - v_prev) / (v[k1] - v_prev) * (tj - t_prev)
            ts.append(tj)
            vs.append(v[k1])
            break
        t_prev, v_prev = tj, v[k1]
        ts.append(tj)
        vs.append(v[k1])
    else:  # coarse and fine steps disagree on the crossing; take the end of the step
        T = t + grid.dt
    C = envelope_constant() if C is None else C
    try:
        T1 = solve_T1(epsilon, theta, C)
    except ValueError:
        T1 = float("nan")
    ratio = epsilon * math.exp(T) / T**1.5
    return TransientResult(epsilon, lambda_target, T, T1, np.array(ts), np.array(vs), ratio, T_lin)


@dataclass(frozen=True)
class LawFit:
    slope: float
    intercept: float
    stderr: float
    ci95: tuple
    n: int
    decades: float
    ratio_spread: float  # max/min of eps e^T / T^{3/2}
    consistent: bool
    band: tuple = (1.2, 1.8)


def transient_law_fit(epsilons, T_values, band=(1.2, 1.8), min_decades: float = 5.0) -> LawFit:
    """Regress ``T - ln(1/eps)`` on ``ln ln(1/eps)``; the expansion predicts slope 3/2.

    ``consistent`` requires the slope inside ``band``; a slope whose 95% interval
    contains 0 is never consistent.
    """
    eps = np.asarray(epsilons, dtype=float)
    T = np.asarray(T_values, dtype=float)
    if eps.size < 3 or eps.size != T.size:
        raise ValueError("need at least 3 (eps, T) pairs")
    decades = float(np.log10(eps.max() / eps.min()))
    if decades < min_decades - 1e-9:
        raise ValueError(f"insufficient sweep: {decades:.2f} decades < {min_decades}")
    L = np.log(1.0 / eps)
    x = np.log(L)
    yv = T - L
    reg = stats.linregress(x, yv)
    dof = eps.size - 2
    half = float(stats.t.ppf(0.975, dof) * reg.stderr) if dof > 0 else float("inf")
    ci = (reg.slope - half, reg.slope + half)
    ratio = eps * np.exp(T) / T**1.5
    nonzero = not (ci[0] <= 0.0 <= ci[1]) or (reg.stderr == 0 and abs(reg.slope) > 1e-12)
    consistent = bool(band[0] <= reg.slope <= band[1] and nonzero)
    return LawFit(float(reg.slope), float(reg.intercept), float(reg.stderr), ci, int(eps.size), decades,
                  float(ratio.max() / ratio.min()), consistent, tuple(band))


def sweep_T_eps(epsilons, lambda_target: float = 0.5, nl: Nonlinearity | None = None,
                grid: TransientGrid | None = None) -> list[TransientResult]:
    C = envelope_constant()
    return [measure_T_eps(float(e), lambda_target, nl, grid, C=C) for e in epsilons]
