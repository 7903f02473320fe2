"""Parameters, nonlinearities and state containers shared by every solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

ROOT_TOL = 1e-12
STATE_BOUND_TOL = 1e-6
NONLINEAR_KINDS = ("logistic", "threshold", "linear")
MODES = ("nonlinear", "linearized", "fractional_kpp")


class ConfigError(ValueError):
    """Raised when a parameter set violates a model invariant."""


class BracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction ``f(v) = a*v - g(v)``.

    ``logistic``: g(v) = v**2, ``threshold``: g(v) = ((v - theta)_+ / (1 - theta))**3,
    ``linear``: g = 0 (used by the linearized system).
    """

    kind: str = "logistic"
    a: float = 1.0
    theta: float = 0.3

    def __post_init__(self):
        if self.kind not in NONLINEAR_KINDS:
            raise ConfigError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "threshold" and not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)")
        if self.a < 0:
            raise ConfigError("growth rate a must be nonnegative")

    def g(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "logistic":
            return v * v
        if self.kind == "threshold":
            s = np.maximum(v - self.theta, 0.0) / (1.0 - self.theta)
            return s * s * s
        return np.zeros_like(v)

    def dg(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "logistic":
            return 2.0 * v
        if self.kind == "threshold":
            s = np.maximum(v - self.theta, 0.0) / (1.0 - self.theta)
            return 3.0 * s * s / (1.0 - self.theta)
        return np.zeros_like(v)

    def primitive(self, v):
        """F(v) = int_0^v f."""
        v = np.asarray(v, dtype=float)
        if self.kind == "logistic":
            G = v**3 / 3.0
        elif self.kind == "threshold":
            s = np.maximum(v - self.theta, 0.0)
            G = s**4 / (4.0 * (1.0 - self.theta) ** 3)
        else:
            G = np.zeros_like(v)
        return 0.5 * self.a * v * v - G


def eval_reaction(nl: Nonlinearity, v):
    """Return ``a*v - g(v)``; exactly ``a*v`` where ``g`` vanishes."""
    v = np.asarray(v, dtype=float)
    if nl.kind == "linear":
        return nl.a * v
    if nl.kind == "threshold":
        out = nl.a * v
        above = v > nl.theta
        if np.ndim(out) == 0:
            return out - nl.g(v) if above else out
        out = out.copy()
        out[above] -= nl.g(v[above])
        return out
    return nl.a * v - nl.g(v)


def positive_zero_v0(nl: Nonlinearity) -> float:
    """Unique positive zero of f, by bisection."""
    lo = nl.theta if nl.kind == "threshold" else 0.0
    # f > 0 just above lo, f < 0 at a large enough upper bracket
    lo_probe = lo + 1e-9 * max(1.0, nl.a)
    if eval_reaction(nl, lo_probe) <= 0:
        raise BracketError(f"f is not positive right of {lo}: inconsistent nonlinearity")
    hi = max(2.0 * nl.a, 1.0) + 1.0
    for _ in range(60):
        if eval_reaction(nl, hi) < 0:
            break
        hi *= 2.0
    else:
        raise BracketError("no sign change of f found: nonlinearity has no positive zero")
    a_, b_ = lo_probe, hi
    for _ in range(200):
        mid = 0.5 * (a_ + b_)
        fm = float(eval_reaction(nl, mid))
        if fm > 0:
            a_ = mid
        else:
            b_ = mid
        if b_ - a_ <= 4 * np.finfo(float).eps * b_:
            break
    root = 0.5 * (a_ + b_)
    if abs(float(eval_reaction(nl, root))) > ROOT_TOL:
        # pick the bracket end with the smaller residual
        root = min((a_, b_), key=lambda r: abs(float(eval_reaction(nl, r))))
    return root


def reaction_flow(nl: Nonlinearity, v, tau: float):
    """Advance ``v' = f(v)`` over ``tau``.

    Closed form for the logistic and linear families, one Heun (RK2) step for
    the threshold family.
    """
    v = np.asarray(v, dtype=float)
    if tau == 0:
        return v.copy()
    a = nl.a
    if nl.kind == "linear":
        return v * math.exp(a * tau)
    if nl.kind == "logistic":
        if a == 0:
            return v / (1.0 + v * tau)
        e = math.exp(a * tau)
        return a * v * e / (a + v * (e - 1.0))
    k1 = eval_reaction(nl, v)
    k2 = eval_reaction(nl, v + tau * k1)
    return v + 0.5 * tau * (k1 + k2)


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical parameters of one experiment.

    Construct through :func:`make_params`, which validates the invariants and
    fills the derived quantities.
    """

    alpha: float
    a: float = 1.0
    mu: float = 1.0
    nu: float = 1.0
    k: float = 0.0
    delta0: float = 0.1
    x0_init: float = 1.0
    X: float = 100.0
    Y: float = 40.0
    nx: int = 256
    ny: int = 64
    dt: float = 0.01
    t_final: float = 1.0
    nonlinearity: str = "logistic"
    theta: float = 0.3
    mode: str = "nonlinear"
    road_symbol: str = "auto"
    lateral_bc: str = "dirichlet"
    top_bc: str = "dirichlet"
    mollify_cells: int = 2
    seed: int = 0
    # derived
    dx: float = field(init=False)
    dy: float = field(init=False)
    lambda_star: float = field(init=False)
    drift_exponent: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dx", 2.0 * self.X / self.nx)
        object.__setattr__(self, "dy", self.Y / self.ny)
        object.__setattr__(self, "lambda_star", self.a / (1.0 + 2.0 * self.alpha))
        object.__setattr__(self, "drift_exponent", 3.0 / (2.0 * (1.0 + 2.0 * self.alpha)))

    @property
    def nl(self) -> Nonlinearity:
        if self.mode == "linearized":
            return Nonlinearity("linear", self.a)
        return Nonlinearity(self.nonlinearity, self.a, self.theta)

    @property
    def v0(self) -> float:
        return positive_zero_v0(self.nl)

    @property
    def resolved_symbol(self) -> str:
        if self.road_symbol != "auto":
            return self.road_symbol
        # exact |xi|^(2 alpha) rings negative on the periodic grid for alpha > 1/2
        return "exact" if self.alpha <= 0.5 else "lattice"

    def x_grid(self) -> np.ndarray:
        return -self.X + (np.arange(self.nx) + 0.5) * self.dx

    def y_grid(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    def replace(self, **changes) -> "ModelParams":
        raw = self.to_dict()
        raw.update(changes)
        return make_params(raw)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.init}


_INT_KEYS = {"nx", "ny", "mollify_cells", "seed"}
_STR_KEYS = {"nonlinearity", "mode", "road_symbol", "lateral_bc", "top_bc"}
_ALIASES = {"domain_half_width": "X", "strip_height": "Y", "x0": "x0_init"}


def make_params(raw_config: Mapping[str, Any]) -> ModelParams:
    """Validate a key-value map and build :class:`ModelParams`.

    Raises :class:`ConfigError` naming the violated inequality.
    """
    known = {f.name for f in fields(ModelParams) if f.init}
    cfg: dict[str, Any] = {}
    for key, value in raw_config.items():
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"unknown parameter {key!r}")
        if key in _INT_KEYS:
            fv = float(value)
            if fv != int(fv):
                raise ConfigError(f"{key} must be an integer")
            value = int(fv)
        elif key in _STR_KEYS:
            value = str(value)
        else:
            value = float(value)
        cfg[key] = value
    if "alpha" not in cfg:
        raise ConfigError("missing required key 'alpha'")
    p = ModelParams(**cfg)
    _validate(p)
    return p


def _validate(p: ModelParams) -> None:
    if not 0.0 < p.alpha < 1.0:
        raise ConfigError(f"alpha out of range: need 0 < alpha < 1, got {p.alpha}")
    for name in ("mu", "nu", "dt", "delta0", "x0_init", "X", "Y"):
        if getattr(p, name) <= 0:
            raise ConfigError(f"{name} must be > 0, got {getattr(p, name)}")
    if p.mode == "linearized":
        if p.a < 0:
            raise ConfigError(f"a must be >= 0, got {p.a}")
    elif p.a <= 0:
        raise ConfigError(f"a must be > 0, got {p.a}")
    if p.k < 0:
        raise ConfigError(f"k must be >= 0, got {p.k}")
    if p.nx < 8 or p.ny < 8:
        raise ConfigError(f"need nx >= 8 and ny >= 8, got nx={p.nx}, ny={p.ny}")
    if p.t_final < 0:
        raise ConfigError("t_final must be >= 0")
    if p.mode not in MODES:
        raise ConfigError(f"unknown mode {p.mode!r}")
    if p.nonlinearity not in ("logistic", "threshold"):
        raise ConfigError(f"nonlinearity must be logistic or threshold, got {p.nonlinearity!r}")
    if p.road_symbol not in ("auto", "exact", "lattice"):
        raise ConfigError(f"unknown road_symbol {p.road_symbol!r}")
    for name in ("lateral_bc", "top_bc"):
        if getattr(p, name) not in ("dirichlet", "neumann"):
            raise ConfigError(f"{name} must be dirichlet or neumann")
    if p.mollify_cells < 0:
        raise ConfigError("mollify_cells must be >= 0")
    y_need = 2.0 * math.sqrt(p.a) * p.t_final + 10.0
    if p.mode != "fractional_kpp" and p.Y < y_need:
        raise ConfigError(f"strip too short: need Y >= 2*sqrt(a)*t_final + 10 = {y_need:.6g}, got Y={p.Y}")
    if p.mode in ("nonlinear", "fractional_kpp"):
        x_need = 4.0 * math.exp(p.a * p.t_final / (1.0 + 2.0 * p.alpha))
        if p.X < x_need:
            raise ConfigError(
                f"road too short: need X >= 4*exp(a*t_final/(1+2*alpha)) = {x_need:.6g}, got X={p.X}"
            )
    if p.dt * p.a > 0.25:
        raise ConfigError(f"reaction step too large: need dt*a <= 0.25, got {p.dt * p.a:.6g}")
    if p.mode != "fractional_kpp" and p.dt * (p.mu + p.nu) > 0.2:
        raise ConfigError(f"exchange step too large: need dt*(mu+nu) <= 0.2, got {p.dt * (p.mu + p.nu):.6g}")
    if p.mode != "fractional_kpp" and p.dt * (p.mu + p.k) >= 1.0:
        raise ConfigError("need dt*(mu+k) < 1 for a positive road update")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` text; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = line.split(sep, 1)
                break
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def _freeze(arr) -> np.ndarray:
    a = np.array(arr, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RoadFieldState:
    """Road density ``u`` (nx,) and field density ``v`` (nx, ny) at time ``t``.

    Arrays are copied and made read-only on construction.
    """

    t: float
    u: np.ndarray
    v: np.ndarray
    dx: float
    dy: float

    def __post_init__(self):
        u = _freeze(self.u)
        v = _freeze(self.v)
        if u.ndim != 1 or v.ndim != 2 or v.shape[0] != u.shape[0]:
            raise ValueError(f"inconsistent shapes u{u.shape} v{v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def mass(self) -> float:
        """Discrete total mass, road plus field (half weight on the y=0 row)."""
        w = np.ones(self.v.shape[1])
        w[0] = 0.5
        return float(self.u.sum() * self.dx + (self.v @ w).sum() * self.dx * self.dy)

    def check_bounds(self, params: ModelParams, tol: float = STATE_BOUND_TOL) -> None:
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError(f"non-finite state at t={self.t}")
        if self.u.min() < 0 or self.v.min() < 0:
            raise ValueError(f"negative density at t={self.t}")
        if params.mode == "linearized":
            return
        v0 = params.v0
        ub = max(params.delta0, params.nu * v0 / params.mu) * (1 + tol)
        vb = max(params.delta0, v0) * (1 + tol)
        if self.u.max() > ub or self.v.max() > vb:
            raise ValueError(
                f"state bound violated at t={self.t}: max u={self.u.max():.6g} (bound {ub:.6g}), "
                f"max v={self.v.max():.6g} (bound {vb:.6g})"
            )
