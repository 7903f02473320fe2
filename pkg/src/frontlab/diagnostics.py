"""Turn trajectories into propagation measurements.

Level sets, drift exponents, self-similar renormalisation, the far-field law
of the linearised system and the road/field communication probes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats
from scipy.special import erf, gamma

from .coupled import SimulationRun, Trajectory, initial_road, run_simulation
from .field import StripScheme, step_field
from .model import ModelParams, Nonlinearity, RoadFieldState
from .transients import M0, envelope_constant, solve_T1

BOUNDARY_CELLS = 5


# --- level sets ---------------------------------------------------------------------


@dataclass(frozen=True)
class LevelSetTrace:
    lam: float
    times: np.ndarray
    positions: np.ndarray  # nan where invalid
    valid: np.ndarray

    def window(self, t0: float, t1: float) -> "LevelSetTrace":
        m = (self.times >= t0 - 1e-9) & (self.times <= t1 + 1e-9)
        return LevelSetTrace(self.lam, self.times[m], self.positions[m], self.valid[m])


def _loglog_interp(x0, x1, u0, u1, lam):
    if u0 > 0 and u1 > 0 and x0 > 0 and x1 > 0 and u0 != u1:
        s = (math.log(lam) - math.log(u0)) / (math.log(u1) - math.log(u0))
        return math.exp(math.log(x0) + s * (math.log(x1) - math.log(x0)))
    return x0 + (lam - u0) / (u1 - u0) * (x1 - x0)


def track_level_set(u, x, lam: float, boundary_cells: int = BOUNDARY_CELLS):
    """Rightmost downcrossing of ``lam``.

    Returns ``(position, valid)``. Between the bracketing nodes ``ln u`` is
    interpolated linearly in ``ln x``, which is exact on power-law tails.
    Invalid (position ``nan``) when ``lam >= max u`` or the crossing lies
    within ``boundary_cells`` of the right edge.
    """
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    if u.shape != x.shape:
        raise ValueError("u and x must have the same shape")
    if not lam > 0 or lam >= u.max():
        return float("nan"), False
    j = int(np.flatnonzero(u >= lam)[-1])
    if j >= u.size - 1 - boundary_cells:
        return float("nan"), False
    if u[j] == lam:
        return float(x[j]), bool(x[j] > 0)
    pos = _loglog_interp(x[j], x[j + 1], u[j], u[j + 1], lam)
    return float(pos), bool(pos > 0)


def trace_level_set(traj: Trajectory, lam: float, edge_fraction: float = 1e-3) -> LevelSetTrace:
    """Track ``lam`` on every snapshot.

    A sample is also invalid when the road density at the domain edge exceeds
    ``edge_fraction * lam`` (wrap-around contamination of the periodic solver).
    """
    pos = np.full(len(traj.times), np.nan)
    ok = np.zeros(len(traj.times), dtype=bool)
    for i in range(len(traj.times)):
        u = traj.u[i]
        p, v = track_level_set(u, traj.x, lam)
        if v and max(u[0], u[-1]) <= edge_fraction * lam:
            pos[i], ok[i] = p, True
    return LevelSetTrace(lam, np.asarray(traj.times, float), pos, ok)


@dataclass(frozen=True)
class DriftFit:
    m: float
    stderr: float
    intercept: float
    n: int
    span: float


def fit_drift_exponent(trace: LevelSetTrace, lambda_star: float, min_samples: int = 10,
                       min_span: float = 2.0) -> DriftFit:
    """Least-squares slope of ``ln x_lam(t) - lambda_star t`` against ``ln t``.

    For ``x = e^{lambda_star t} t^m`` the slope is ``m``.
    """
    ok = trace.valid & np.isfinite(trace.positions) & (trace.times > 0)
    t = trace.times[ok]
    x = trace.positions[ok]
    if t.size < min_samples:
        raise ValueError(f"insufficient samples: {t.size} valid < {min_samples}")
    span = float(t.max() / t.min())
    if span < min_span - 1e-12:
        raise ValueError(f"insufficient span: t_max/t_min = {span:.3g} < {min_span}")
    reg = stats.linregress(np.log(t), np.log(x) - lambda_star * t)
    return DriftFit(float(reg.slope), float(reg.stderr), float(reg.intercept), int(t.size), span)


# --- self-similar renormalisation ---------------------------------------------------


def sample_loglog(u, x, xq):
    """Sample ``u`` at positive points ``xq`` by linear interpolation of ``ln u`` in ``ln x``."""
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    pos = (x > 0) & (u > 0)
    xp, up = x[pos], u[pos]
    return np.exp(np.interp(np.log(xq), np.log(xp), np.log(up)))


@dataclass(frozen=True)
class RenormTable:
    m: float
    times: np.ndarray
    s: np.ndarray
    values: np.ndarray  # (n_times, n_s); nan where flagged
    flagged: np.ndarray
    late_start: float
    score: float


def scale_grid(n: int = 33, lo: float = 0.25, hi: float = 4.0) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def renormalized_samples(traj: Trajectory, m: float, lambda_star: float, s_grid=None,
                         late_start: float | None = None, margin: float = 0.05) -> RenormTable:
    """Table of ``u(t, s t^{-m} e^{lambda_star t})`` and its stabilisation score.

    The score is the largest, over ``s``, of ``max - min`` of the samples at
    times ``>= late_start`` (default: second half of the time range). Points
    beyond ``X (1 - margin)`` or at ``t = 0`` are flagged and skipped.
    """
    s = scale_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    times = np.asarray(traj.times, dtype=float)
    X = traj.params.X
    vals = np.full((times.size, s.size), np.nan)
    flagged = np.ones((times.size, s.size), dtype=bool)
    for i, t in enumerate(times):
        if t <= 0:
            continue
        xq = s * t ** (-m) * math.exp(lambda_star * t)
        inside = (xq < X * (1.0 - margin)) & (xq > traj.x[traj.x > 0][0])
        if inside.any():
            vals[i, inside] = sample_loglog(traj.u[i], traj.x, xq[inside])
            flagged[i, inside] = False
    if late_start is None:
        late_start = 0.5 * (times.min() + times.max())
    late = times >= late_start - 1e-9
    block = vals[late]
    cols = ~np.any(np.isnan(block), axis=0)
    if not cols.any() or block.shape[0] < 2:
        score = float("nan")
    else:
        score = float(np.max(block[:, cols].max(axis=0) - block[:, cols].min(axis=0)))
    return RenormTable(m, times, s, vals, flagged, float(late_start), score)


# --- far field of the linearised system ----------------------------------------------


def far_field_constant(alpha: float, mu: float, k: float = 0.0, mass: float = 2.0 * math.pi) -> float:
    """Constant of the far-field law ``u ~ K e^t / (t^{3/2} |x|^{1+2 alpha})``.

    ``K = mass * 2 alpha Gamma(2 alpha) sin(alpha pi) mu / (pi^{3/2} (1 + k)^3)``.
    The default ``mass = 2 pi`` is the normalisation under which this equals
    ``8 alpha mu sin(alpha pi) Gamma(2 alpha) Gamma(3/2) / pi`` at ``k = 0``.
    """
    return mass * 2.0 * alpha * gamma(2.0 * alpha) * math.sin(alpha * math.pi) * mu / (math.pi**1.5 * (1.0 + k) ** 3)


@dataclass(frozen=True)
class AsymptotePrediction:
    constant: float
    leading: np.ndarray
    envelope: np.ndarray


def kernel_asymptote(t, x, alpha: float, mu: float, k: float = 0.0, a: float = 1.0, C: float = 1.0,
                     delta: float = 0.5, mass: float = 2.0 * math.pi) -> AsymptotePrediction:
    """Leading far-field term and the remainder envelope

    ``C (e^{-delta t} + e^t / |x|^{min(1+4 alpha, 3)} + e^t / (|x|^{1+2 alpha} t^{5/2}))``.
    """
    t = np.asarray(t, dtype=float)
    ax = np.abs(np.asarray(x, dtype=float))
    K = far_field_constant(alpha, mu, k, mass)
    lead = K * np.exp(a * t) / (t**1.5 * ax ** (1.0 + 2.0 * alpha))
    env = C * (np.exp(-delta * t) + np.exp(a * t) / ax ** min(1.0 + 4.0 * alpha, 3.0)
               + np.exp(a * t) / (ax ** (1.0 + 2.0 * alpha) * t**2.5))
    return AsymptotePrediction(K, lead, env)


def front_scale(t, alpha: float, a: float = 1.0):
    """``e^{a t/(1+2 alpha)} / t^{3/(2(1+2 alpha))}``."""
    t = np.asarray(t, dtype=float)
    return np.exp(a * t / (1 + 2 * alpha)) / t ** (3.0 / (2.0 * (1 + 2 * alpha)))


@dataclass(frozen=True)
class AsymptoteReport:
    constant_theory: float
    mass: float
    times: np.ndarray
    fan: np.ndarray  # x / x_front multipliers
    ratios: np.ndarray  # (n_times, n_fan), nan where unresolved, normalised to mass 2 pi
    median: np.ndarray
    latest_ratio: float
    latest_rel_error: float
    monotone: bool
    doubling_change: float  # max relative change of the ratio when x doubles, latest time
    remainder_C: float
    remainder_delta: float
    inside_envelope: float  # fraction of deviations inside the fitted envelope
    inconclusive: bool


def validate_linearized_far_field(traj: Trajectory, params: ModelParams, fan=(3.0, 10.0), n_fan: int = 9,
                                  t_window=(10.0, 25.0), min_cells: int = 32, noise: float = 1e-14,
                                  monotone_tol: float = 2e-3) -> AsymptoteReport:
    """Compare ``u t^{3/2} |x|^{1+2 alpha} e^{-a t}`` with the far-field constant.

    Ratios are normalised by ``2 pi / M`` with ``M`` the initial road mass, the
    convention under which the theoretical constant is stated. Fan points closer
    to the origin than ``min_cells`` cells or beyond ``X/4`` are unresolved.
    """
    alpha, a = params.alpha, params.a
    M = float(initial_road(params).sum() * params.dx)
    K = far_field_constant(alpha, params.mu, params.k)
    mult = np.geomspace(fan[0], fan[1], n_fan)
    sel = (traj.times >= t_window[0] - 1e-9) & (traj.times <= t_window[1] + 1e-9)
    times = traj.times[sel]
    rows = np.flatnonzero(sel)
    ratios = np.full((times.size, mult.size), np.nan)
    for r, (i, t) in enumerate(zip(rows, times)):
        xq = mult * float(front_scale(t, alpha, a))
        ok = (xq >= min_cells * params.dx) & (xq <= params.X / 4.0)
        if not ok.any():
            continue
        uq = sample_loglog(traj.u[i], traj.x, xq[ok])
        good = uq > noise
        val = uq * t**1.5 * xq[ok] ** (1 + 2 * alpha) * math.exp(-a * t) * (2.0 * math.pi / M)
        tmp = np.full(ok.sum(), np.nan)
        tmp[good] = val[good]
        ratios[r, ok] = tmp
    valid_rows = ~np.all(np.isnan(ratios), axis=1)
    if not valid_rows.any():
        nan = float("nan")
        return AsymptoteReport(K, M, times, mult, ratios, np.full(times.size, np.nan), nan, nan, False, nan,
                               nan, nan, nan, True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(ratios, axis=1)
    mv = med[valid_rows]
    monotone = bool(np.all(np.diff(mv) >= -monotone_tol * np.abs(mv[:-1])))
    last = ratios[np.flatnonzero(valid_rows)[-1]]
    latest = float(np.nanmedian(last))
    # ratio change when x doubles: compare fan points a factor 2 apart
    lr = np.log(mult)
    change = 0.0
    for j in range(mult.size):
        jj = int(np.argmin(np.abs(lr - (lr[j] + math.log(2.0)))))
        if abs(lr[jj] - lr[j] - math.log(2.0)) < 0.05 and np.isfinite(last[j]) and np.isfinite(last[jj]):
            change = max(change, abs(last[jj] / last[j] - 1.0))
    C, delta, inside = _fit_remainder(ratios, times, mult, alpha, a, K)
    return AsymptoteReport(K, M, times, mult, ratios, med, latest, abs(latest / K - 1.0), monotone, change,
                           C, delta, inside, False)


def _fit_remainder(ratios, times, mult, alpha, a, K):
    """Least-squares fit of ``(C, delta)`` for the remainder envelope on the fan."""
    tt, xx, dev = [], [], []
    for r, t in enumerate(times):
        for j, m in enumerate(mult):
            if np.isfinite(ratios[r, j]):
                x = m * float(front_scale(t, alpha, a))
                tt.append(t)
                xx.append(x)
                # remainder in density units, relative to the leading term's normalisation
                dev.append(abs(ratios[r, j] - K) / (t**1.5 * x ** (1 + 2 * alpha) * math.exp(-a * t)))
    if len(dev) < 3:
        return float("nan"), float("nan"), float("nan")
    tt, xx, dev = map(np.asarray, (tt, xx, dev))

    def basis(delta):
        return (np.exp(-delta * tt) + np.exp(a * tt) / xx ** min(1 + 4 * alpha, 3.0)
                + np.exp(a * tt) / (xx ** (1 + 2 * alpha) * tt**2.5))

    def resid(p):
        return np.log(np.exp(p[0]) * basis(p[1]) + 1e-300) - np.log(dev + 1e-300)

    sol = optimize.least_squares(resid, x0=[0.0, 0.5], bounds=([-50.0, 1e-3], [50.0, 5.0]))
    C, delta = float(math.exp(sol.x[0])), float(sol.x[1])
    inside = float(np.mean(dev <= C * basis(delta)))
    return C, delta, inside


# --- communication probes -----------------------------------------------------------


class ProbeError(ValueError):
    """Probe precondition violated by the supplied snapshot."""


@dataclass(frozen=True)
class ProbeResult:
    eps: float
    constant: float  # min over the window, divided by eps


def _window_rows(traj: Trajectory, t0: float):
    rows = [i for i, t in enumerate(traj.times) if t0 + 1 - 1e-9 <= t <= t0 + 2 + 1e-9]
    if not rows:
        raise ProbeError(f"no snapshots in [{t0 + 1}, {t0 + 2}]")
    missing = [traj.times[i] for i in rows if float(traj.times[i]) not in traj.fields]
    if missing:
        raise ProbeError("probe window needs full field snapshots (run with keep_fields)")
    return rows


def _snapshot_index(traj: Trajectory, t0: float) -> int:
    i = int(np.argmin(np.abs(traj.times - t0)))
    if abs(traj.times[i] - t0) > 1e-9:
        raise ProbeError(f"no snapshot at t0={t0}")
    return i


def probe_road_to_field(traj: Trajectory, t0: float, x0: float, L: float, eps: float) -> ProbeResult:
    """``min v / eps`` over ``[t0+1, t0+2] x [x0-L, x0+L] x [0, 1]``, given ``u(t0) >= eps`` on the interval."""
    i0 = _snapshot_index(traj, t0)
    xm = np.abs(traj.x - x0) <= L
    if not xm.any() or traj.u[i0][xm].min() < eps:
        raise ProbeError(f"precondition u(t0, .) >= {eps:g} on [{x0 - L:g}, {x0 + L:g}] fails")
    ym = traj.params.y_grid() <= 1.0 + 1e-9
    lo = min(traj.fields[float(traj.times[i])][np.ix_(xm, ym)].min() for i in _window_rows(traj, t0))
    return ProbeResult(eps, float(lo / eps))


def probe_field_to_road(traj: Trajectory, t0: float, x0: float, L: float, eps: float) -> ProbeResult:
    """``min(u, v) / eps`` over ``[t0+1, t0+2] x [x0-2L, x0+2L] x [0, 1]``, given ``v(t0, x0, 1) >= eps``."""
    i0 = _snapshot_index(traj, t0)
    j = int(np.argmin(np.abs(traj.x - x0)))
    v1 = _value_at_y(traj, i0, j, 1.0)
    if v1 < eps:
        raise ProbeError(f"precondition v(t0, x0, 1) >= {eps:g} fails (got {v1:.3g})")
    xm = np.abs(traj.x - x0) <= 2 * L
    ym = traj.params.y_grid() <= 1.0 + 1e-9
    lo = np.inf
    for i in _window_rows(traj, t0):
        v = traj.fields[float(traj.times[i])]
        lo = min(lo, v[np.ix_(xm, ym)].min(), traj.u[i][xm].min())
    return ProbeResult(eps, float(lo / eps))


def _value_at_y(traj: Trajectory, i: int, j: int, y: float) -> float:
    t = float(traj.times[i])
    if t in traj.fields:
        return float(np.interp(y, traj.params.y_grid(), traj.fields[t][j]))
    k = list(traj.slice_y).index(y)
    return float(traj.v_slices[i, k, j])


def communication_run(params: ModelParams, eps: float, source: str, L: float = 2.0, t0: float = 0.0):
    """Trajectory for the probes: ``eps`` placed on the road (``source="road"``) over
    ``|x| <= L + 1`` or in the field (``source="field"``) on ``|x| <= 1``, ``y in [1/2, 3/2]``.
    Full fields are kept on ``[t0 + 1, t0 + 2]``."""
    x = params.x_grid()
    y = params.y_grid()
    u = np.zeros(params.nx)
    v = np.zeros((params.nx, params.ny))
    if source == "road":
        u[np.abs(x) <= L + 1.0] = eps
    elif source == "field":
        v[np.ix_(np.abs(x) <= 1.0, np.abs(y - 1.0) <= 0.5)] = eps
    else:
        raise ValueError("source must be 'road' or 'field'")
    n = int(round(1.0 / params.dt))
    times = tuple(sorted({t0} | {t0 + 1.0 + j * params.dt * max(1, n // 10) for j in range(11)}))
    times = tuple(t for t in times if t <= t0 + 2.0 + 1e-9)
    init = RoadFieldState(0.0, u, v, params.dx, params.dy)
    return run_simulation(SimulationRun(params, times, keep_fields=True, initial=init)).trajectory


def eps_sweep_variation(results) -> float:
    c = np.array([r.constant for r in results])
    return float(c.max() / c.min())


# --- Dirichlet comparison problem ---------------------------------------------------


def dirichlet_box_exact(t, y, lo: float, hi: float):
    """Half-line heat flow with ``v(t, 0) = 0`` from ``1_[lo, hi]``, without growth."""
    r = 2.0 * np.sqrt(t)
    y = np.asarray(y, dtype=float)
    return 0.5 * (erf((y - lo) / r) - erf((y - hi) / r) + erf((y + lo) / r) - erf((y + hi) / r))


def box_x_factor(t, x, half_width: float):
    """Whole-line heat flow from ``1_[-w, w]``."""
    r = 2.0 * np.sqrt(t)
    x = np.asarray(x, dtype=float)
    return 0.5 * (erf((x + half_width) / r) - erf((x - half_width) / r))


@dataclass(frozen=True)
class DirichletBoxResult:
    x0: float
    eps: float
    T1: float
    value: float  # v(T1, 0, 1)
    q: float  # value * sqrt(T1)
    q_linear: float  # same quantity from the product formula with g = 0


def probe_dirichlet_box(x0: float, alpha: float = 0.5, eps: float | None = None, theta: float = 0.3, c: float = 1.0,
                  dx: float = 1.0, dy: float = 0.1, dt: float = 0.01, C: float | None = None,
                  nonlinearity: str = "threshold") -> DirichletBoxResult:
    """Run the Dirichlet-bottom field problem from ``c eps 1_{|x| <= sqrt x0, 0 <= y <= 1}`` to ``T1``.

    ``eps`` defaults to ``1 / (1 + x0^{1+2 alpha})``; another value triggers a
    warning. Returns ``v(T1, 0, 1) sqrt(T1)`` with the product-formula value for
    the purely linear problem as reference.
    """
    eps_ref = 1.0 / (1.0 + x0 ** (1.0 + 2.0 * alpha))
    if eps is None:
        eps = eps_ref
    elif not math.isclose(eps, eps_ref, rel_tol=1e-9):
        warnings.warn(f"eps={eps:g} does not match 1/(1+x0^(1+2 alpha))={eps_ref:g}", stacklevel=2)
    C = envelope_constant() if C is None else C
    T1 = solve_T1(eps, theta, C, M0)
    w = math.sqrt(x0)
    W = w + 8.0 * math.sqrt(T1) + 10.0
    nx = 2 * int(math.ceil(W / dx))
    X = 0.5 * nx * dx
    Y = 2.0 * T1 + 10.0
    ny = int(math.ceil(Y / dy))
    nl = Nonlinearity(nonlinearity, 1.0, theta)
    n_steps = int(math.ceil(T1 / dt - 1e-9))
    h = T1 / n_steps
    scheme = StripScheme(nx, ny, dx, dy, h, bottom="dirichlet")
    x = -X + (np.arange(nx) + 0.5) * dx
    y = np.arange(ny) * dy
    # cell averages of the box
    fx = np.clip(np.minimum(x + 0.5 * dx, w) - np.maximum(x - 0.5 * dx, -w), 0.0, None) / dx
    fy = np.clip(np.minimum(y + 0.5 * dy, 1.0) - np.maximum(y - 0.5 * dy, 0.0), 0.0, None) / dy
    v = c * eps * np.outer(fx, fy)
    v[:, 0] = 0.0
    for _ in range(n_steps):
        v = step_field(scheme, v, None, nl)
    k1 = int(round(1.0 / dy))
    j0 = nx // 2
    val = float(0.5 * (v[j0 - 1, k1] + v[j0, k1]))  # x = 0 lies between two cells
    lin = c * eps * math.exp(T1) * float(dirichlet_box_exact(T1, 1.0, 0.0, 1.0)) * float(box_x_factor(T1, 0.0, w))
    return DirichletBoxResult(x0, eps, T1, val, val * math.sqrt(T1), lin * math.sqrt(T1))
