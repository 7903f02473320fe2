"""Road-field simulator: the nonlinear system, its linearisation, and fractional KPP on the line.

Modes
-----
``nonlinear``       field reaction ``f(v)``, road ``u_t + (-d_xx)^a u = -mu u + nu v(x, 0)``.
``linearized``      field reaction ``a v``, road carries the extra damping ``-k u``.
``fractional_kpp``  road only: ``u_t + (-d_xx)^a u = f(u)``.

One coupled step: the field advances with the road density of the previous step
as exchange source, then the road takes the explicit exchange increment and the
exact fractional semigroup over ``dt``. The field bottom row entering the road
update is the one used in the implicit exchange flux, so with ``f = 0`` the
discrete total mass changes only through the outer boundaries.
"""

from __future__ import annotations

import functools
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .field import InstabilityError, StripScheme, react, step_field_with_flux
from .fracop import FracOperator, frac_heat_multiplier_step
from .io import SnapshotWriter, file_index, write_json
from .model import ModelParams, RoadFieldState

ROAD_RINGING_TOL = 1e-8
SNAPSHOT_Y = (0.0, 1.0)

TOLERANCES = {
    "field_negativity_clip": 1e-12,
    "road_ringing_clip_relative": ROAD_RINGING_TOL,
    "state_bound_relative": 1e-6,
    "root_residual": 1e-12,
}


def initial_road(params: ModelParams) -> np.ndarray:
    """Box ``delta0 * 1_(-x0, x0)`` averaged over a window of ``mollify_cells`` cells each side."""
    x = params.x_grid()
    r = params.mollify_cells * params.dx
    x0 = params.x0_init
    if r == 0:
        return params.delta0 * (np.abs(x) < x0).astype(float)
    lo = np.maximum(x - r, -x0)
    hi = np.minimum(x + r, x0)
    return params.delta0 * np.clip(hi - lo, 0.0, None) / (2.0 * r)


def initial_state(params: ModelParams) -> RoadFieldState:
    ny = 0 if params.mode == "fractional_kpp" else params.ny
    return RoadFieldState(0.0, initial_road(params), np.zeros((params.nx, ny)), params.dx, params.dy)


class CoupledStepper:
    """Holds the operators for one parameter set; ``step`` is pure in the state."""

    def __init__(self, params: ModelParams, dt: float | None = None):
        self.params = params
        self.dt = params.dt if dt is None else dt
        self.nl = params.nl
        self.op = FracOperator(params.alpha, params.X, params.nx, "spectral", params.resolved_symbol)
        self.scheme = None
        if params.mode != "fractional_kpp":
            self.scheme = StripScheme.from_params(params, "robin", dt=self.dt)
        self.damping = params.mu + (params.k if params.mode == "linearized" else 0.0)

    def step_arrays(self, u: np.ndarray, v: np.ndarray, t: float):
        p, dt = self.params, self.dt
        if p.mode == "fractional_kpp":
            w = react(self.nl, u, 0.5 * dt)
            w = frac_heat_multiplier_step(self.op, w, dt)
            u_new = react(self.nl, w, 0.5 * dt)
            v_new = v
        else:
            v_new, v_bottom = step_field_with_flux(self.scheme, v, u, self.nl)
            w = u * (1.0 - self.damping * dt) + (p.nu * dt) * v_bottom
            u_new = frac_heat_multiplier_step(self.op, w, dt)
        u_new = self._check_road(u_new, t + dt)
        return u_new, v_new

    def _check_road(self, u: np.ndarray, t: float) -> np.ndarray:
        if not np.all(np.isfinite(u)):
            bad = np.flatnonzero(~np.isfinite(u))
            raise InstabilityError(
                f"non-finite road density at t={t:.6g}, indices {bad[:5].tolist()} "
                f"(x={self.params.x_grid()[bad[:5]].tolist()}), dt={self.dt}"
            )
        umin = u.min()
        if umin < 0:
            umax = max(u.max(), 0.0)
            if umin < -ROAD_RINGING_TOL * umax:
                j = int(np.argmin(u))
                raise InstabilityError(
                    f"negative road density {umin:.3e} at x={self.params.x_grid()[j]:.6g} "
                    f"(t={t:.6g}, dt={self.dt}, max u={umax:.3e})"
                )
            np.maximum(u, 0.0, out=u)
        return u

    def step(self, state: RoadFieldState) -> RoadFieldState:
        u, v = self.step_arrays(np.array(state.u), np.array(state.v), state.t)
        return RoadFieldState(state.t + self.dt, u, v, state.dx, state.dy)


@functools.lru_cache(maxsize=4)
def _stepper(params: ModelParams, dt: float) -> CoupledStepper:
    return CoupledStepper(params, dt)


def step_coupled(state: RoadFieldState, params: ModelParams, dt: float | None = None) -> RoadFieldState:
    """One IMEX step of the road-field system (or of the mode selected in ``params``)."""
    dt = params.dt if dt is None else dt
    if state.u.shape != (params.nx,):
        raise ValueError("state grid does not match params")
    new = _stepper(params, dt).step(state)
    if params.mode == "nonlinear":
        try:
            new.check_bounds(params)
        except ValueError as exc:
            raise InstabilityError(str(exc)) from exc
    return new


def state_bounds(params: ModelParams, tol: float = TOLERANCES["state_bound_relative"]):
    v0 = params.v0
    return (max(params.delta0, params.nu * v0 / params.mu) * (1 + tol), max(params.delta0, v0) * (1 + tol))


def _check_bounds(u, v, bounds, t):
    ub, vb = bounds
    umax = u.max()
    vmax = v.max() if v.size else 0.0
    if umax > ub or vmax > vb:
        raise InstabilityError(f"state bound violated at t={t:.6g}: max u={umax:.6g} (bound {ub:.6g}), "
                               f"max v={vmax:.6g} (bound {vb:.6g})")


# --- runs ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Snapshots kept in memory: road profiles and field slices at ``y`` in ``slice_y``."""

    params: ModelParams
    times: np.ndarray
    x: np.ndarray
    u: np.ndarray  # (n_times, nx)
    v_slices: np.ndarray  # (n_times, len(slice_y), nx)
    slice_y: tuple = SNAPSHOT_Y
    fields: dict = field(default_factory=dict)  # time -> full field, when kept

    def road(self, i: int) -> np.ndarray:
        return self.u[i]


@dataclass(frozen=True)
class SimulationRun:
    params: ModelParams
    snapshot_times: tuple
    out_dir: Path | None = None
    field_cadence: int = 0  # persist every n-th snapshot's full field; 0 disables
    keep_fields: bool = False
    initial: RoadFieldState | None = None

    def __post_init__(self):
        ts = np.asarray(self.snapshot_times, dtype=float)
        if ts.size == 0:
            raise ValueError("need at least one snapshot time")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        if ts[0] < 0 or ts[-1] > self.params.t_final + 1e-12:
            raise ValueError("snapshot times must lie in [0, t_final]")

    @property
    def mode(self) -> str:
        return self.params.mode


@dataclass
class RunManifest:
    data: dict

    def to_json(self, path) -> Path:
        return write_json(path, self.data)

    def __getitem__(self, key):
        return self.data[key]


@dataclass(frozen=True)
class SimulationResult:
    manifest: RunManifest
    trajectory: Trajectory


def _slice_weights(params: ModelParams, y: float):
    """Rows and weights interpolating the field linearly at height ``y``."""
    s = y / params.dy
    k = min(int(np.floor(s + 1e-9)), params.ny - 2)
    w = s - k
    if abs(w) < 1e-9:
        return k, k + 1, 1.0, 0.0
    return k, k + 1, 1.0 - w, w


def field_slice(v: np.ndarray, sw) -> np.ndarray:
    k0, k1, w0, w1 = sw
    return w0 * v[:, k0] + w1 * v[:, k1] if w1 else v[:, k0].copy()


def run_simulation(run: SimulationRun) -> SimulationResult:
    """Step from 0 to ``t_final`` recording snapshots; persist them when ``out_dir`` is set."""
    p = run.params
    dt = p.dt
    n_total = int(round(p.t_final / dt))
    snap_steps = [int(round(t / dt)) for t in run.snapshot_times]
    if any(b <= a for a, b in zip(snap_steps, snap_steps[1:])):
        raise ValueError("snapshot times closer than one time step")
    state = run.initial if run.initial is not None else initial_state(p)
    stepper = CoupledStepper(p, dt)
    x = p.x_grid()
    coupled = p.mode != "fractional_kpp"
    slice_k = [_slice_weights(p, y) for y in SNAPSHOT_Y] if coupled else []
    writer = SnapshotWriter(run.out_dir) if run.out_dir is not None else None
    times, us, vs, fields = [], [], [], {}
    u = np.array(state.u)
    v = np.array(state.v)
    bounds = state_bounds(p) if p.mode == "nonlinear" else None
    t0 = time.perf_counter()
    step = 0
    truncated = False
    error = None

    def record(step_idx):
        t = step_idx * dt
        times.append(t)
        uc = u.copy()
        us.append(uc)
        vsl = np.stack([field_slice(v, sw) for sw in slice_k]) if coupled else np.empty((0, p.nx))
        vs.append(vsl)
        i = len(times) - 1
        if run.keep_fields and coupled:
            fields[t] = v.copy()
        if writer is not None:
            writer.put_road(t, x, uc)
            if coupled:
                writer.put_csv(f"field_slices_{i:04d}.csv", ["x"] + [f"v_y{y:g}" for y in SNAPSHOT_Y],
                               np.column_stack([x, vsl.T]))
                if run.field_cadence and i % run.field_cadence == 0:
                    writer.put_field(f"field_{i:04d}.bin", v.copy(), origin=(x[0], 0.0),
                                     spacing=(p.dx, p.dy), t=t)

    try:
        pending = list(snap_steps)
        if pending and pending[0] == 0:
            record(0)
            pending.pop(0)
        while step < n_total:
            u, v = stepper.step_arrays(u, v, step * dt)
            step += 1
            if bounds is not None:
                _check_bounds(u, v, bounds, step * dt)
            if pending and pending[0] == step:
                record(step)
                pending.pop(0)
    except (InstabilityError, ValueError) as exc:
        truncated = True
        error = exc
    wall = time.perf_counter() - t0
    files = writer.close(truncated=truncated) if writer is not None else []
    traj = Trajectory(p, np.array(times), x, np.array(us),
                      np.array(vs) if vs else np.empty((0, len(slice_k), p.nx)), SNAPSHOT_Y, fields)
    manifest = build_manifest(p, run, steps=step, wall=wall, files=files, truncated=truncated,
                              error=None if error is None else str(error))
    if run.out_dir is not None:
        manifest.to_json(Path(run.out_dir) / "manifest.json")
    if error is not None:
        if isinstance(error, InstabilityError):
            raise InstabilityError(f"{error} [partial outputs flushed]") from error
        raise InstabilityError(str(error)) from error
    return SimulationResult(manifest, traj)


def build_manifest(p: ModelParams, run: SimulationRun, *, steps: int, wall: float, files, truncated: bool,
                   error: str | None) -> RunManifest:
    root = Path(run.out_dir) if run.out_dir is not None else Path(".")
    data = {
        "code_version": __version__,
        "params": p.to_dict(),
        "derived": {"dx": p.dx, "dy": p.dy, "lambda_star": p.lambda_star, "drift_exponent": p.drift_exponent},
        "scheme": {
            "road": f"spectral fractional semigroup, symbol={p.resolved_symbol}, exchange explicit",
            "field": "Strang(reaction) + LOD backward-Euler ADI, robin ghost-node bottom",
            "reaction": {"logistic": "exact", "linear": "exact", "threshold": "Heun RK2"}[p.nl.kind],
            "initial_mollification_radius": p.mollify_cells * p.dx,
        },
        "grid": {"nx": p.nx, "ny": p.ny, "X": p.X, "Y": p.Y, "lateral_bc": p.lateral_bc, "top_bc": p.top_bc},
        "tolerances": dict(TOLERANCES),
        "snapshot_times": [float(t) for t in run.snapshot_times],
        "steps": steps,
        "wall_clock_s": wall,
        "truncated": truncated,
        "error": error,
        "outputs": file_index(files, root) if files else [],
    }
    return RunManifest(data)


def run_fractional_kpp(params: ModelParams, lam: float = 0.1, snapshot_times: Sequence[float] | None = None,
                       reaction: bool = True, initial=None):
    """Solve fractional KPP on the line and return its level-set trace at ``lam``.

    With ``reaction=False`` the pure fractional heat flow is solved instead.
    """
    from .diagnostics import trace_level_set

    if params.mode != "fractional_kpp":
        params = params.replace(mode="fractional_kpp")
    if snapshot_times is None:
        n = max(1, int(round(params.t_final)))
        snapshot_times = np.linspace(0.0, params.t_final, 4 * n + 1)
    stepper = CoupledStepper(params)
    if not reaction:
        stepper.nl = params.nl.__class__("linear", 0.0)
    u = initial_road(params) if initial is None else np.array(initial, dtype=float)
    v = np.zeros((params.nx, 0))
    dt = params.dt
    snap_steps = [int(round(t / dt)) for t in snapshot_times]
    times, us = [], []
    step = 0
    for target in snap_steps:
        while step < target:
            u, v = stepper.step_arrays(u, v, step * dt)
            step += 1
        times.append(step * dt)
        us.append(u.copy())
    traj = Trajectory(params, np.array(times), params.x_grid(), np.array(us), np.empty((len(times), 0, params.nx)), ())
    return trace_level_set(traj, lam), traj
