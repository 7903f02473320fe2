"""Reaction-diffusion on the truncated strip ``[-X, X] x [0, Y]``.

One step is Strang split: half reaction, diffusion, half reaction. Diffusion is
a locally one-dimensional backward-Euler ADI (x sweep then y sweep), so each
sweep inverts an M-matrix and the step is monotone and positivity preserving.
Cell-centred nodes in x, ``y_k = k dy`` for ``k = 0..ny-1`` in y. The bottom row
either carries the exchange condition ``-v_y = mu u - nu v`` through the ghost
value ``v(-dy) = v(dy) + 2 dy (mu u - nu v(0))`` or is held at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import Nonlinearity

NEG_TOL = 1e-12


class InstabilityError(RuntimeError):
    """Non-finite or significantly negative values after a step."""


class Tridiag:
    """Thomas factorisation of a diagonally dominant tridiagonal matrix, reused across solves."""

    def __init__(self, lower, diag, upper):
        self._lu = _kernels.thomas_factor(np.asarray(lower, float), np.asarray(diag, float),
                                          np.asarray(upper, float))
        self.n = len(diag)

    def solve_axis0(self, b: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Solve with the system index along axis 0 (columns are independent right-hand sides)."""
        b2 = b[:, None] if b.ndim == 1 else b
        res = np.empty(b2.shape) if out is None else (out[:, None] if out.ndim == 1 else out)
        _kernels.solve_cols(*self._lu, b2, res)
        return res[:, 0] if b.ndim == 1 else res

    def solve_axis1(self, b: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Solve with the system index along axis 1 (rows are independent right-hand sides)."""
        b2 = b[None, :] if b.ndim == 1 else b
        res = np.empty(b2.shape) if out is None else (out[None, :] if out.ndim == 1 else out)
        _kernels.solve_rows(*self._lu, b2, res)
        return res[0] if b.ndim == 1 else res


def diffusion_matrix_1d(n: int, h: float, tau: float, left: str, right: str):
    """Bands of ``I - tau * D2`` with ghost-node boundary closures.

    ``dirichlet``: zero ghost node one spacing outside; ``neumann``: mirror ghost
    (zero flux through the face half a spacing outside); ``robin``: symmetric
    ghost about the first node, with the exchange coefficient added separately.
    """
    r = tau / (h * h)
    diag = np.full(n, 1.0 + 2.0 * r)
    lower = np.full(n - 1, -r)
    upper = np.full(n - 1, -r)
    if left == "neumann":
        diag[0] = 1.0 + r
    elif left == "robin":
        upper[0] = -2.0 * r
    if right == "neumann":
        diag[-1] = 1.0 + r
    elif right == "robin":
        lower[-1] = -2.0 * r
    return lower, diag, upper


def react(nl: Nonlinearity, v: np.ndarray, tau: float) -> np.ndarray:
    """Pointwise reaction flow over ``tau`` (compiled for the nonlinear families)."""
    v = np.ascontiguousarray(v, dtype=float)
    if tau == 0.0:
        return v.copy()
    out = np.empty_like(v)
    if nl.kind == "logistic":
        _kernels.logistic_flow(v, nl.a, tau, out)
    elif nl.kind == "threshold":
        _kernels.threshold_heun(v, nl.a, nl.theta, tau, out)
    else:
        np.multiply(v, np.exp(nl.a * tau), out=out)
    return out


@dataclass(frozen=True)
class ColumnScheme:
    """Backward-Euler diffusion in y on ``y_k = k dy``, ``k = 0..ny-1``.

    Arrays carry y on their last axis: a single column ``(ny,)`` or a strip ``(nx, ny)``.
    """

    ny: int
    dy: float
    dt: float
    bottom: str = "dirichlet"  # or "robin"
    top: str = "dirichlet"  # or "neumann"
    nu: float = 1.0
    mu: float = 1.0
    _fac: Tridiag = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.bottom not in ("dirichlet", "robin"):
            raise ValueError(f"unknown bottom boundary {self.bottom!r}")
        if self.top not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown top boundary {self.top!r}")
        if self.ny < 3:
            raise ValueError("ny too small")
        if self.bottom == "robin":
            lower, diag, upper = diffusion_matrix_1d(self.ny, self.dy, self.dt, "robin", self.top)
            diag[0] += 2.0 * self.dt * self.nu / self.dy
        else:
            lower, diag, upper = diffusion_matrix_1d(self.ny - 1, self.dy, self.dt, "dirichlet", self.top)
        object.__setattr__(self, "_fac", Tridiag(lower, diag, upper))

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    def diffuse(self, v: np.ndarray, u_boundary=None) -> np.ndarray:
        """One backward-Euler step in y; ``u_boundary`` feeds the exchange source."""
        v = np.asarray(v, dtype=float)
        if self.bottom == "robin":
            rhs = np.array(v, dtype=float, copy=True)
            if u_boundary is not None:
                rhs[..., 0] += (2.0 * self.dt * self.mu / self.dy) * np.asarray(u_boundary, float)
            return self._fac.solve_axis1(rhs, out=rhs)
        out = np.empty_like(v)
        out[..., 0] = 0.0
        self._fac.solve_axis1(v[..., 1:], out=out[..., 1:])
        return out


def _check_and_clip(v: np.ndarray, dt: float, grid: str) -> np.ndarray:
    vmin, arg, finite = _kernels.min_and_finite(v)
    if not finite:
        raise InstabilityError(f"non-finite field after step (dt={dt}, grid {grid})")
    if vmin < 0:
        if vmin < -NEG_TOL:
            where = np.unravel_index(arg, v.shape)
            raise InstabilityError(
                f"negative field value {vmin:.3e} at index {where} (dt={dt}, grid {grid})"
            )
        _kernels.clip_negative(v, 0.0)
    return v


def dirichlet_1d_column_solve(column, nl: Nonlinearity, dt: float, *, dy: float | None = None,
                              scheme: ColumnScheme | None = None) -> np.ndarray:
    """One Strang step of ``v_t - v_yy = f(v)`` with ``v(t, 0) = 0`` on a column.

    Same splitting and y discretisation as :func:`step_field`. Pass a prebuilt
    ``scheme`` when stepping repeatedly; otherwise ``dy`` is required.
    """
    v = np.asarray(column, dtype=float)
    if scheme is None:
        if dy is None:
            raise ValueError("need dy or a ColumnScheme")
        scheme = ColumnScheme(v.shape[-1], dy, dt)
    elif scheme.dt != dt or scheme.ny != v.shape[-1]:
        raise ValueError("scheme does not match column length / dt")
    w = react(nl, v, 0.5 * dt)
    w = scheme.diffuse(w)
    w = react(nl, w, 0.5 * dt)
    if scheme.bottom == "dirichlet":
        w[..., 0] = 0.0
    return _check_and_clip(w, dt, f"ny={scheme.ny}, dy={scheme.dy}")


@dataclass(frozen=True)
class StripScheme:
    """ADI configuration for the strip; factorisations cached per direction.

    Lateral and top boundaries are homogeneous Dirichlet by default; ``neumann``
    (zero flux through the outer cell faces) exists for conservation and
    equilibrium harnesses.
    """

    nx: int
    ny: int
    dx: float
    dy: float
    dt: float
    mu: float = 1.0
    nu: float = 1.0
    bottom: str = "robin"  # or "dirichlet"
    lateral: str = "dirichlet"  # or "neumann"
    top: str = "dirichlet"  # or "neumann"
    _xfac: Tridiag = field(init=False, repr=False, compare=False)
    _col: ColumnScheme = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.lateral not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown lateral boundary {self.lateral!r}")
        object.__setattr__(
            self, "_xfac", Tridiag(*diffusion_matrix_1d(self.nx, self.dx, self.dt, self.lateral, self.lateral))
        )
        object.__setattr__(
            self, "_col", ColumnScheme(self.ny, self.dy, self.dt, self.bottom, self.top, self.nu, self.mu)
        )

    @classmethod
    def from_params(cls, params, bottom: str = "robin", dt: float | None = None) -> "StripScheme":
        return cls(params.nx, params.ny, params.dx, params.dy, params.dt if dt is None else dt,
                   params.mu, params.nu, bottom, params.lateral_bc, params.top_bc)

    @property
    def grid_label(self) -> str:
        return f"nx={self.nx}, ny={self.ny}, dx={self.dx:.4g}, dy={self.dy:.4g}"

    def diffuse(self, v: np.ndarray, u_boundary=None) -> np.ndarray:
        w = self._xfac.solve_axis0(v)
        return self._col.diffuse(w, u_boundary)


def step_field_with_flux(scheme: StripScheme, v, u_boundary, nl: Nonlinearity):
    """Advance the field by ``scheme.dt``.

    Returns the new field and the bottom row that entered the implicit exchange
    flux (before the second half reaction), which the road update reuses.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (scheme.nx, scheme.ny):
        raise ValueError(f"field shape {v.shape} does not match scheme ({scheme.nx}, {scheme.ny})")
    if scheme.bottom == "robin":
        if u_boundary is None:
            raise ValueError("robin bottom needs the road density")
        u_boundary = np.asarray(u_boundary, dtype=float)
        if u_boundary.shape != (scheme.nx,):
            raise ValueError("u_boundary not aligned with the x grid")
    dt = scheme.dt
    w = react(nl, v, 0.5 * dt)
    w = scheme.diffuse(w, u_boundary)
    v_bottom = w[:, 0].copy()
    w = react(nl, w, 0.5 * dt)
    if scheme.bottom == "dirichlet":
        w[:, 0] = 0.0
    return _check_and_clip(w, dt, scheme.grid_label), v_bottom


def step_field(scheme: StripScheme, v, u_boundary, nl: Nonlinearity) -> np.ndarray:
    """Advance the strip field by one step of ``scheme.dt``."""
    return step_field_with_flux(scheme, v, u_boundary, nl)[0]


def robin_ghost(v_interior, v_boundary, u, dy: float, mu: float, nu: float):
    """Ghost value below ``y = 0`` eliminating ``v_y`` from the exchange condition."""
    return v_interior + 2.0 * dy * (mu * u - nu * v_boundary)
