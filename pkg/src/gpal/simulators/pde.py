"""Explicit finite-difference solvers for the two PDE case studies.

Both solvers march forward Euler in time with central differences in space.
The requested time step is the spacing of output time levels; it is split
into equal substeps whenever the explicit stability bound requires it.
Time derivatives handed to the learner are the forward-Euler increments
``(u^{n+1} - u^n) / dt_sub`` at the snapshot, i.e. the discrete right-hand
side, so they are consistent with the spatial stencils reported alongside.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STABILITY_SAFETY = 0.9


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class PdeGrid:
    """Uniform grid on ``bounds`` (one ``(lo, hi)`` pair per spatial dimension)."""

    bounds: tuple[tuple[float, float], ...]
    steps: tuple[float, ...]
    dt: float

    def __post_init__(self):
        if len(self.bounds) != len(self.steps):
            raise ValueError("one step per spatial dimension is required")
        if not self.dt > 0 or any(not h > 0 for h in self.steps):
            raise ValueError("grid steps must be positive")
        for (lo, hi), h in zip(self.bounds, self.steps):
            cells = (hi - lo) / h
            if abs(cells - round(cells)) > 1e-6:
                raise ValueError(f"step {h} does not divide [{lo}, {hi}]")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round((hi - lo) / h)) + 1 for (lo, hi), h in zip(self.bounds, self.steps))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.shape)]

    def levels(self, t: float) -> int:
        k = t / self.dt
        if abs(k - round(k)) > 1e-6:
            raise ValueError(f"t={t} is not a time level of step {self.dt}")
        return int(round(k))


@dataclass(frozen=True)
class Snapshot:
    """Fields at one time level on the grid nodes.

    ``fields`` maps a name (``u``, ``u_x1``, ``u_x1x1``, ``u_t`` ...) to an
    array of the grid shape.  Burgers leaves boundary derivatives NaN; the
    diffusion solver fills them with one-sided stencils.
    """

    grid: PdeGrid
    t: float
    fields: dict[str, np.ndarray] = field(default_factory=dict)
    substeps: int = 1


def _stable_substeps(dt: float, limit: float) -> int:
    return max(1, math.ceil(dt / (STABILITY_SAFETY * limit)))


# -- Burgers -------------------------------------------------------------------


def burgers_initial(x):
    x = np.asarray(x, dtype=float)
    return 2 * np.exp(-15 * (x - 6) ** 2) + 1.5 * np.exp(-15 * (x + 1) ** 2) + np.exp(-25 * (x + 5) ** 2)


BURGERS_GRID = PdeGrid(bounds=((0.0, 10.0),), steps=(0.0025,), dt=0.001)


def _d1(u, h):
    out = np.full_like(u, np.nan)
    out[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    return out


def _d2(u, h):
    out = np.full_like(u, np.nan)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / (h * h)
    return out


def solve_burgers(initial=burgers_initial, grid: PdeGrid = BURGERS_GRID, t_snapshot: float = 0.1,
                  advection: float = 1.0, viscosity: float = 0.01) -> Snapshot:
    """Solve ``u_t + advection*u*u_x = viscosity*u_xx`` with boundary values
    held at their initial values; return ``u, u_x1, u_x1x1, u_t`` at ``t_snapshot``."""
    if len(grid.steps) != 1:
        raise ValueError("Burgers solver is one-dimensional")
    h = grid.steps[0]
    (x,) = grid.axes()
    u = np.asarray(initial(x), dtype=float).copy()
    umax0 = float(np.max(np.abs(u)))
    limit = 1.0 / (abs(advection) * max(umax0, 1e-12) / h + 2 * viscosity / h**2)
    sub = _stable_substeps(grid.dt, limit)
    tau = grid.dt / sub
    blowup = 1e3 * max(umax0, 1e-12)

    def rhs(v):
        r = np.zeros_like(v)
        r[1:-1] = (-advection * v[1:-1] * (v[2:] - v[:-2]) / (2 * h)
                   + viscosity * (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2)
        return r

    for _ in range(grid.levels(t_snapshot) * sub):
        u = u + tau * rhs(u)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > blowup:
            raise SolverError("Burgers solution blew up")
    ut = rhs(u)
    ut[[0, -1]] = np.nan
    return Snapshot(grid, t_snapshot, {"u": u, "u_x1": _d1(u, h), "u_x1x1": _d2(u, h), "u_t": ut}, sub)


# -- 2-D diffusion -----------------------------------------------------------


DIFFUSION_MEANS = ((3.0, 5.0), (7.0, 5.0))
DIFFUSION_COV = ((0.25, 0.3), (0.3, 1.0))


def gaussian_mixture_initial(means=DIFFUSION_MEANS, cov=DIFFUSION_COV):
    """Sum of bivariate normal densities with a shared covariance."""
    S = np.asarray(cov, dtype=float)
    Sinv = np.linalg.inv(S)
    norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(S)))

    def c0(X, Y):
        total = np.zeros(np.broadcast(X, Y).shape)
        for mx, my in means:
            dx, dy = X - mx, Y - my
            q = Sinv[0, 0] * dx * dx + 2 * Sinv[0, 1] * dx * dy + Sinv[1, 1] * dy * dy
            total += norm * np.exp(-0.5 * q)
        return total

    return c0


def diffusion_grid(pool_nodes: int = 32, refine: int = 8, t_snapshot: float = 0.0005,
                   length: float = 10.0) -> PdeGrid:
    """Grid whose nodes include the ``pool_nodes``-per-side candidate lattice."""
    h = length / ((pool_nodes - 1) * refine)
    return PdeGrid(bounds=((0.0, length), (0.0, length)), steps=(h, h), dt=t_snapshot / 10)


def solve_diffusion_2d(initial=None, grid: PdeGrid | None = None, t_snapshot: float = 0.0005,
                       diffusivity: float = 1.0) -> Snapshot:
    """FTCS solution of ``c_t = diffusivity * (c_xx + c_yy)`` with zero
    boundary values.  Returns ``u, u_x1, u_x2, u_x1x1, u_x2x2, u_x1x2, u_t``
    (the state is called ``u`` for uniformity; x1 is the first axis)."""
    initial = initial or gaussian_mixture_initial()
    grid = grid or diffusion_grid(t_snapshot=t_snapshot)
    if len(grid.steps) != 2:
        raise ValueError("diffusion solver is two-dimensional")
    hx, hy = grid.steps
    limit = hx**2 * hy**2 / (2 * diffusivity * (hx**2 + hy**2))
    if grid.dt > limit:
        raise SolverError(f"time step {grid.dt:g} violates the diffusive bound {limit:g}")
    xs, ys = grid.axes()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    c = np.asarray(initial(X, Y), dtype=float).copy()
    c[0, :] = c[-1, :] = c[:, 0] = c[:, -1] = 0.0

    def lap(v):
        r = np.zeros_like(v)
        r[1:-1, 1:-1] = ((v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / hx**2
                         + (v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / hy**2)
        return diffusivity * r

    for _ in range(grid.levels(t_snapshot)):
        c = c + grid.dt * lap(c)
    nan = np.full_like(c, np.nan)
    cx, cy, cxx, cyy, cxy, ct = (nan.copy() for _ in range(6))
    inner = (slice(1, -1), slice(1, -1))
    cx[inner] = (c[2:, 1:-1] - c[:-2, 1:-1]) / (2 * hx)
    cy[inner] = (c[1:-1, 2:] - c[1:-1, :-2]) / (2 * hy)
    cxx[inner] = (c[2:, 1:-1] - 2 * c[1:-1, 1:-1] + c[:-2, 1:-1]) / hx**2
    cyy[inner] = (c[1:-1, 2:] - 2 * c[1:-1, 1:-1] + c[1:-1, :-2]) / hy**2
    cxy[inner] = (c[2:, 2:] - c[2:, :-2] - c[:-2, 2:] + c[:-2, :-2]) / (4 * hx * hy)
    ct[inner] = lap(c)[inner]
    _fill_edges(c, hx, hy, cx, cy, cxx, cyy, cxy)
    ct[np.isnan(ct)] = 0.0
    fields = {"u": c, "u_x1": cx, "u_x2": cy, "u_x1x1": cxx, "u_x2x2": cyy, "u_x1x2": cxy, "u_t": ct}
    return Snapshot(grid, t_snapshot, fields)


def _second_one_sided(v, h, axis):
    """Second derivative with 4-point one-sided stencils at both ends."""
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def _fill_edges(c, hx, hy, cx, cy, cxx, cyy, cxy):
    """Replace NaN boundary derivatives by second-order one-sided values."""
    gx = np.gradient(c, hx, axis=0, edge_order=2)
    gy = np.gradient(c, hy, axis=1, edge_order=2)
    full = {
        id(cx): gx,
        id(cy): gy,
        id(cxx): _second_one_sided(c, hx, 0),
        id(cyy): _second_one_sided(c, hy, 1),
        id(cxy): np.gradient(gx, hy, axis=1, edge_order=2),
    }
    for arr in (cx, cy, cxx, cyy, cxy):
        mask = np.isnan(arr)
        arr[mask] = full[id(arr)][mask]


# -- snapshot cache file -----------------------------------------------------

SNAPSHOT_FIELDS = ("u", "u_x1", "u_x2", "u_x1x1", "u_x2x2", "u_x1x2", "u_t")
_HEADER = struct.Struct("<8sqqdddddd")
_MAGIC = b"GPALSNP1"


def write_snapshot(path, snap: Snapshot) -> None:
    """Persist a 2-D snapshot.

    Layout (little-endian): 8-byte magic ``GPALSNP1``; int64 nx, ny;
    float64 x0, y0, dx, dy, dt, t_snapshot; then the seven fields of
    ``SNAPSHOT_FIELDS`` in order, each nx*ny float64 values row-major
    (first axis x).
    """
    g = snap.grid
    if len(g.steps) != 2:
        raise ValueError("only 2-D snapshots are persisted")
    nx, ny = g.shape
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, nx, ny, g.bounds[0][0], g.bounds[1][0],
                              g.steps[0], g.steps[1], g.dt, snap.t))
        for name in SNAPSHOT_FIELDS:
            fh.write(np.ascontiguousarray(snap.fields[name], dtype="<f8").tobytes())


def read_snapshot(path) -> Snapshot:
    data = Path(path).read_bytes()
    magic, nx, ny, x0, y0, dx, dy, dt, t = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ValueError("not a snapshot file")
    grid = PdeGrid(bounds=((x0, x0 + dx * (nx - 1)), (y0, y0 + dy * (ny - 1))), steps=(dx, dy), dt=dt)
    size = nx * ny * 8
    fields = {}
    for i, name in enumerate(SNAPSHOT_FIELDS):
        off = _HEADER.size + i * size
        fields[name] = np.frombuffer(data[off:off + size], dtype="<f8").reshape(nx, ny).copy()
    return Snapshot(grid, t, fields)
