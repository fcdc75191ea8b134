"""Backward-Euler finite differences for L u = f in a planar sector.

The operator du/dt - a11 u_xx - 2 a12 u_xy - a22 u_yy is discretized in
polar coordinates on a radially graded tensor mesh with the vertex excised.
Within one time step the frozen matrix A_k produces a 9-point stencil
(the mixed derivative contributes the centered cross term).  Backward Euler
is the deliberate choice over Crank-Nicolson: the coefficients jump in
time, and L-stable first-order stepping avoids ringing across the jumps.

Boundary handling
  * dirichlet : rows pinned to zero on both rays and on the outer arc.
  * oblique   : the fixed direction is the cone's graph axis (the sector
    bisector); the boundary rows discretize that directional derivative
    with one-sided second-order differences into the domain.
  * vertex    : the innermost ring carries a homogeneous-decay row
    u(r0) = (r0/r1)^lambda u(r1); lambda defaults to 1 for dirichlet and
    0 (zero slope) for oblique and is the dominant error source near the
    vertex.  Callers refining an exponent estimate can pass their own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .coefficients import CoefficientPath
from .geometry import WedgeDomain, make_sector
from . import kvio


class SolverError(RuntimeError):
    """Linear solve failed or produced non-finite values."""


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------


class SectorMesh:
    """Tensor mesh: geometric radii, uniform angles, jump-aligned times."""

    def __init__(self, theta0: float, r: np.ndarray, theta: np.ndarray,
                 times: np.ndarray):
        self.theta0 = float(theta0)
        self.r = np.asarray(r, dtype=float)
        self.theta = np.asarray(theta, dtype=float)
        self.times = np.asarray(times, dtype=float)
        if self.r[0] <= 0.0:
            raise ValueError("vertex must be excised: need r_min > 0")
        q = self.r[:-1] / self.r[1:]
        if q.min() < 0.8 - 1e-12 or q.max() >= 1.0:
            raise ValueError("radial grading ratio must lie in [0.8, 1)")
        self._ops = None

    # -- construction --------------------------------------------------------

    @classmethod
    def build(cls, theta0: float, rmax: float, n_r: int, n_theta: int,
              t_begin: float, t_end: float, n_t: int,
              rmin: float | None = None,
              path: CoefficientPath | None = None) -> "SectorMesh":
        """Geometric radial grading from rmin (default 1e-3 rmax) to rmax;
        time steps absorb every coefficient jump as a step boundary."""
        rmin = 1e-3 * rmax if rmin is None else float(rmin)
        if not 0.0 < rmin < rmax:
            raise ValueError("need 0 < rmin < rmax")
        n_r_min = int(math.ceil(math.log(rmax / rmin) / math.log(1.0 / 0.8)))
        n_r = max(n_r, n_r_min)
        r = rmin * (rmax / rmin) ** (np.arange(n_r + 1) / n_r)
        r[-1] = rmax
        theta = np.linspace(0.0, theta0, n_theta + 1)

        knots = [t_begin]
        if path is not None:
            knots += [b for b in path.jumps if t_begin < b < t_end]
        knots.append(t_end)
        times = [t_begin]
        total = t_end - t_begin
        for a, b in zip(knots, knots[1:]):
            steps = max(1, int(round(n_t * (b - a) / total)))
            times.extend(np.linspace(a, b, steps + 1)[1:])
        return cls(theta0, r, theta, np.array(times))

    # -- bookkeeping -----------------------------------------------------------

    @property
    def n_r(self) -> int:
        return len(self.r) - 1

    @property
    def n_theta(self) -> int:
        return len(self.theta) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.r) * len(self.theta)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.r), len(self.theta))

    def grading_ratio(self) -> float:
        return float(np.max(self.r[:-1] / self.r[1:]))

    def index(self, i, j):
        return i * len(self.theta) + j

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian coordinate grids X, Y of shape (n_r+1, n_theta+1)."""
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return rr * np.cos(tt), rr * np.sin(tt)

    def local_cell_size(self, x: float, y: float) -> float:
        r = math.hypot(x, y)
        i = int(np.clip(np.searchsorted(self.r, r), 1, self.n_r))
        dr = self.r[i] - self.r[i - 1]
        dth = self.theta[1] - self.theta[0]
        return max(dr, r * dth)

    def space_weights(self) -> np.ndarray:
        """Trapezoidal r dr dtheta node weights, shape (n_r+1, n_theta+1)."""
        wr = np.empty_like(self.r)
        wr[1:-1] = 0.5 * (self.r[2:] - self.r[:-2])
        wr[0] = 0.5 * (self.r[1] - self.r[0])
        wr[-1] = 0.5 * (self.r[-1] - self.r[-2])
        wt = np.empty_like(self.theta)
        wt[1:-1] = 0.5 * (self.theta[2:] - self.theta[:-2])
        wt[0] = 0.5 * (self.theta[1] - self.theta[0])
        wt[-1] = 0.5 * (self.theta[-1] - self.theta[-2])
        return (self.r * wr)[:, None] * wt[None, :]

    def time_weights(self) -> np.ndarray:
        wt = np.empty_like(self.times)
        wt[1:-1] = 0.5 * (self.times[2:] - self.times[:-2])
        wt[0] = 0.5 * (self.times[1] - self.times[0])
        wt[-1] = 0.5 * (self.times[-1] - self.times[-2])
        return wt

    def assert_jump_aligned(self, path: CoefficientPath) -> None:
        for b in path.jumps:
            if self.times[0] < b < self.times[-1]:
                if np.min(np.abs(self.times - b)) > 1e-10 * max(1.0, abs(b)):
                    raise ValueError(
                        f"coefficient jump at t={b} is not a time-step boundary"
                    )

    # -- difference operators -----------------------------------------------------

    def operators(self):
        """Sparse Cartesian derivative operators (Dx, Dy, Dxx, Dxy, Dyy).

        Rows are populated at interior nodes only; boundary rows are zero.
        """
        if self._ops is not None:
            return self._ops
        nr, nth = self.n_r, self.n_theta
        nnode = self.n_nodes
        dth = self.theta[1] - self.theta[0]

        ii, jj = np.meshgrid(np.arange(1, nr), np.arange(1, nth), indexing="ij")
        ii = ii.reshape(-1)
        jj = jj.reshape(-1)
        r = self.r[ii]
        th = self.theta[jj]
        c, s = np.cos(th), np.sin(th)

        hm = self.r[ii] - self.r[ii - 1]
        hp = self.r[ii + 1] - self.r[ii]
        # nonuniform centered first/second radial derivative weights
        w_m = -hp / (hm * (hm + hp))
        w_0 = (hp - hm) / (hm * hp)
        w_p = hm / (hp * (hm + hp))
        v_m = 2.0 / (hm * (hm + hp))
        v_0 = -2.0 / (hm * hp)
        v_p = 2.0 / (hp * (hm + hp))

        rad1 = {-1: w_m, 0: w_0, 1: w_p}
        rad2 = {-1: v_m, 0: v_0, 1: v_p}
        ang1 = {-1: -1.0 / (2 * dth), 0: 0.0, 1: 1.0 / (2 * dth)}
        ang2 = {-1: 1.0 / dth**2, 0: -2.0 / dth**2, 1: 1.0 / dth**2}

        # polar pieces of each Cartesian operator:
        #   coeffs = (u_rr, u_rtheta, u_thth, u_r, u_th)
        pieces = {
            "Dxx": (c * c, -2 * c * s / r, s * s / r**2, s * s / r, 2 * c * s / r**2),
            "Dyy": (s * s, 2 * c * s / r, c * c / r**2, c * c / r, -2 * c * s / r**2),
            "Dxy": (c * s, (c * c - s * s) / r, -c * s / r**2, -c * s / r,
                    (s * s - c * c) / r**2),
            "Dx": (0.0, 0.0, 0.0, c, -s / r),
            "Dy": (0.0, 0.0, 0.0, s, c / r),
        }
        rows_base = self.index(ii, jj)
        ops = {}
        for name, (crr, crt, ctt, cr, ct) in pieces.items():
            rows, cols, vals = [], [], []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    entry = np.zeros_like(r)
                    if dj == 0:
                        entry = entry + np.asarray(crr) * rad2[di] + np.asarray(cr) * rad1[di]
                    if di == 0:
                        entry = entry + np.asarray(ctt) * ang2[dj] + np.asarray(ct) * ang1[dj]
                    entry = entry + np.asarray(crt) * rad1[di] * ang1[dj]
                    rows.append(rows_base)
                    cols.append(self.index(ii + di, jj + dj))
                    vals.append(entry)
            mat = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(nnode, nnode)).tocsr()
            ops[name] = mat
        self._ops = ops
        return ops

    # -- serialization -------------------------------------------------------------

    def to_kv(self) -> dict[str, str]:
        return {
            "mesh.theta0": kvio.fmt_float(self.theta0),
            "mesh.rmin": kvio.fmt_float(self.r[0]),
            "mesh.rmax": kvio.fmt_float(self.r[-1]),
            "mesh.nr": str(self.n_r),
            "mesh.ntheta": str(self.n_theta),
            "mesh.t_begin": kvio.fmt_float(self.times[0]),
            "mesh.t_end": kvio.fmt_float(self.times[-1]),
            "mesh.nt": str(len(self.times) - 1),
        }

    @classmethod
    def from_kv(cls, entries: dict[str, str],
                path: CoefficientPath | None = None) -> "SectorMesh":
        return cls.build(
            theta0=float(entries["mesh.theta0"]),
            rmax=float(entries["mesh.rmax"]),
            n_r=int(entries["mesh.nr"]),
            n_theta=int(entries["mesh.ntheta"]),
            t_begin=float(entries["mesh.t_begin"]),
            t_end=float(entries["mesh.t_end"]),
            n_t=int(entries["mesh.nt"]),
            rmin=float(entries["mesh.rmin"]) if "mesh.rmin" in entries else None,
            path=path,
        )


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------


@dataclass
class ProblemSpec:
    """One initial-boundary value problem on a sector wedge.

    rhs is either ``f`` alone (plain form) or ``f0`` with vector field
    ``fvec`` (divergence form L u = f0 + div fvec).  All data callables are
    vectorized over Cartesian coordinate arrays: f(X, Y, t).
    """

    bc: str
    domain: WedgeDomain
    path: CoefficientPath
    f: Callable | None = None
    f0: Callable | None = None
    fvec: tuple[Callable, Callable] | None = None
    initial: Callable | None = None
    vertex_lambda: float | None = None

    def __post_init__(self):
        if self.bc not in ("dirichlet", "oblique"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.bc == "oblique" and not self.domain.is_graph:
            raise ValueError("oblique problems need a graph-representable cone")
        if self.f is not None and (self.f0 is not None or self.fvec is not None):
            raise ValueError("give either f or (f0, fvec), not both")
        if self.path.dimension != 2 or self.domain.n != 2:
            raise ValueError("the finite-difference solver is planar (m = n = 2)")


@dataclass
class GridFunction:
    """Space-time solution values u[k, i, j] on a sector mesh."""

    values: np.ndarray
    mesh: SectorMesh
    bc: str
    meta: dict = field(default_factory=dict)

    def snapshot(self, k: int) -> np.ndarray:
        return self.values[k]

    def rows(self):
        for k, t in enumerate(self.mesh.times):
            for i, r in enumerate(self.mesh.r):
                for j, th in enumerate(self.mesh.theta):
                    yield (r, th, t, self.values[k, i, j])

    def save_csv(self, path, meta: dict[str, str]) -> None:
        kvio.write_csv(path, ["r", "theta", "t", "value"], self.rows(), meta)

    def derivative_fields(self, name: str) -> np.ndarray:
        """Apply a mesh derivative operator to every time slice."""
        op = self.mesh.operators()[name]
        shp = self.mesh.shape
        out = np.empty_like(self.values)
        for k in range(self.values.shape[0]):
            out[k] = (op @ self.values[k].reshape(-1)).reshape(shp)
        return out

    def time_derivative(self) -> np.ndarray:
        """Backward differences consistent with the implicit stepping;
        slice 0 repeats slice 1."""
        dt = np.diff(self.mesh.times)[:, None, None]
        out = np.empty_like(self.values)
        out[1:] = (self.values[1:] - self.values[:-1]) / dt
        out[0] = out[1]
        return out


# ---------------------------------------------------------------------------
# assembly and stepping
# ---------------------------------------------------------------------------


def _bc_rows(mesh: SectorMesh, bc: str, vertex_lambda: float):
    """COO triplets for boundary rows, the boundary node set, and the set of
    rows pinned to the exact value zero (clamped after each linear solve)."""
    nr, nth = mesh.n_r, mesh.n_theta
    dth = mesh.theta[1] - mesh.theta[0]
    rows, cols, vals = [], [], []
    boundary = np.zeros(mesh.n_nodes, dtype=bool)
    pinned = np.zeros(mesh.n_nodes, dtype=bool)

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    # outer arc: homogeneous Dirichlet for both problems
    for j in range(nth + 1):
        k = mesh.index(nr, j)
        boundary[k] = True
        pinned[k] = True
        add(k, k, 1.0)

    # excised vertex ring: homogeneous-decay extrapolation row; under a
    # dirichlet condition its ray corners sit on the boundary and stay pinned
    decay = (mesh.r[0] / mesh.r[1]) ** vertex_lambda
    for j in range(nth + 1):
        k = mesh.index(0, j)
        boundary[k] = True
        if bc == "dirichlet" and j in (0, nth):
            pinned[k] = True
            add(k, k, 1.0)
        else:
            add(k, k, 1.0)
            add(k, mesh.index(1, j), -decay)

    if bc == "dirichlet":
        for i in range(1, nr):
            for j in (0, nth):
                k = mesh.index(i, j)
                boundary[k] = True
                pinned[k] = True
                add(k, k, 1.0)
        return rows, cols, vals, boundary, pinned

    # oblique: directional derivative along the bisector axis vanishes.
    # At theta=0:       cos(t0/2) u_r + sin(t0/2) u_theta / r = 0
    # At theta=theta0:  cos(t0/2) u_r - sin(t0/2) u_theta / r = 0
    # The one-sided stencil (-3 u_j + 4 u_{j+step} - u_{j+2 step})/(2 dth)
    # estimates +u_theta at theta=0 (step +1) and -u_theta at theta=theta0
    # (step -1), which is exactly the sign each edge needs.
    half = 0.5 * mesh.theta0
    cb, sb = math.cos(half), math.sin(half)
    for i in range(1, nr):
        hm = mesh.r[i] - mesh.r[i - 1]
        hp = mesh.r[i + 1] - mesh.r[i]
        w_m = -hp / (hm * (hm + hp))
        w_0 = (hp - hm) / (hm * hp)
        w_p = hm / (hp * (hm + hp))
        r = mesh.r[i]
        for j in (0, nth):
            k = mesh.index(i, j)
            boundary[k] = True
            # scale by r to keep the rows O(1) against the interior rows
            add(k, mesh.index(i - 1, j), cb * r * w_m)
            add(k, k, cb * r * w_0)
            add(k, mesh.index(i + 1, j), cb * r * w_p)
            step = 1 if j == 0 else -1
            one_sided = [(-3.0, 0), (4.0, step), (-1.0, 2 * step)]
            for coef, dj in one_sided:
                add(k, mesh.index(i, j + dj), sb * coef / (2.0 * dth))
    return rows, cols, vals, boundary, pinned


def _step_matrix(mesh: SectorMesh, a: np.ndarray, tau: float, bc: str,
                 vertex_lambda: float):
    ops = mesh.operators()
    lap = (a[0, 0] * ops["Dxx"] + 2.0 * a[0, 1] * ops["Dxy"]
           + a[1, 1] * ops["Dyy"])
    rows, cols, vals, boundary, pinned = _bc_rows(mesh, bc, vertex_lambda)
    interior = ~boundary
    mass = sp.diags(interior / tau)
    b = (mass - sp.diags(interior.astype(float)) @ lap).tolil()
    bc_mat = sp.coo_matrix((vals, (rows, cols)), shape=b.shape).tolil()
    b[boundary] = bc_mat[boundary]
    return b.tocsc(), boundary, pinned


class _StepperCache:
    """One LU factorization per (coefficient piece, step size)."""

    def __init__(self, mesh, path, bc, vertex_lambda):
        self.mesh = mesh
        self.path = path
        self.bc = bc
        self.vertex_lambda = vertex_lambda
        self._cache = {}

    def solver(self, t_left: float, tau: float):
        piece = int(np.searchsorted(np.asarray(self.path.jumps), t_left, side="right"))
        key = (piece, round(tau, 14))
        if key not in self._cache:
            a = self.path.at(t_left)
            b, boundary, pinned = _step_matrix(self.mesh, a, tau, self.bc,
                                               self.vertex_lambda)
            try:
                self._cache[key] = (splu(b), boundary, pinned)
            except RuntimeError as exc:  # singular factorization
                raise SolverError(f"time-step factorization failed: {exc}") from exc
        return self._cache[key]


def _sample_rhs(spec: ProblemSpec, mesh: SectorMesh, t: float) -> np.ndarray:
    x, y = mesh.points()
    if spec.f is not None:
        return np.asarray(spec.f(x, y, t), dtype=float)
    if spec.f0 is not None or spec.fvec is not None:
        out = np.zeros(mesh.shape)
        if spec.f0 is not None:
            out += np.asarray(spec.f0(x, y, t), dtype=float)
        if spec.fvec is not None:
            ops = mesh.operators()
            f1 = np.asarray(spec.fvec[0](x, y, t), dtype=float).reshape(-1)
            f2 = np.asarray(spec.fvec[1](x, y, t), dtype=float).reshape(-1)
            div = ops["Dx"] @ f1 + ops["Dy"] @ f2
            out += div.reshape(mesh.shape)
        return out
    return np.zeros(mesh.shape)


def _default_vertex_lambda(spec: ProblemSpec) -> float:
    if spec.vertex_lambda is not None:
        return float(spec.vertex_lambda)
    return 1.0 if spec.bc == "dirichlet" else 0.0


def solve(spec: ProblemSpec, mesh: SectorMesh,
          initial_values: np.ndarray | None = None) -> GridFunction:
    """March the implicit scheme over the mesh window; returns all slices."""
    if isinstance(spec.domain.cone, type(make_sector(1.0).cone)):
        if abs(spec.domain.cone.theta0 - mesh.theta0) > 1e-12:
            raise ValueError("mesh opening disagrees with the domain cone")
    mesh.assert_jump_aligned(spec.path)
    vertex_lambda = _default_vertex_lambda(spec)

    x, y = mesh.points()
    if initial_values is not None:
        u = np.array(initial_values, dtype=float)
    elif spec.initial is not None:
        u = np.asarray(spec.initial(x, y), dtype=float)
    else:
        u = np.zeros(mesh.shape)
    if spec.bc == "dirichlet":
        u[:, 0] = 0.0
        u[:, -1] = 0.0
        u[-1, :] = 0.0

    stepper = _StepperCache(mesh, spec.path, spec.bc, vertex_lambda)
    out = np.empty((len(mesh.times),) + mesh.shape)
    out[0] = u
    for k in range(len(mesh.times) - 1):
        t0, t1 = mesh.times[k], mesh.times[k + 1]
        tau = t1 - t0
        lu, boundary, pinned = stepper.solver(t0, tau)
        rhs = out[k].reshape(-1) / tau + _sample_rhs(spec, mesh, t1).reshape(-1)
        rhs[boundary] = 0.0
        u_new = lu.solve(rhs)
        if not np.all(np.isfinite(u_new)):
            raise SolverError(f"non-finite solution at t={t1}")
        u_new[pinned] = 0.0  # pinned rows carry the exact boundary value
        out[k + 1] = u_new.reshape(mesh.shape)
    return GridFunction(values=out, mesh=mesh, bc=spec.bc,
                        meta={"vertex_lambda": vertex_lambda})


# ---------------------------------------------------------------------------
# numerical Green functions
# ---------------------------------------------------------------------------


@dataclass
class GreenTable:
    """Numerical kernel table u(x; t) ~ Green(x, y; t, s) for one source."""

    grid: GridFunction
    y: tuple[float, float]
    s: float
    width: float

    @property
    def mesh(self) -> SectorMesh:
        return self.grid.mesh

    def comparison_mask(self, r_low=0.2, r_high=0.8, min_elapsed=None):
        """Boolean (time, r, theta) mask: R_x(t-s) in [r_low, r_high] and
        t - s beyond the mollifier contamination layer (default 10 width^2)."""
        mesh = self.mesh
        min_elapsed = 10.0 * self.width**2 if min_elapsed is None else min_elapsed
        elapsed = mesh.times - self.s
        rr = mesh.r[None, :, None]
        et = np.maximum(elapsed, 0.0)[:, None, None]
        rfac = rr / (rr + np.sqrt(et))
        mask = (rfac >= r_low) & (rfac <= r_high)
        mask &= (elapsed > min_elapsed)[:, None, None]
        mask = np.broadcast_to(mask, self.grid.values.shape).copy()
        mask[:, [0, -1], :] = False
        return mask


def mollified_bump(mesh: SectorMesh, y: tuple[float, float], width: float,
                   dirichlet: bool = False) -> np.ndarray:
    """Radial Gaussian of std ``width`` at y, normalized to discrete mass 1.

    With ``dirichlet`` the boundary rows are zeroed before normalizing, so
    the evolved table starts at exactly unit discrete mass."""
    x, yy = mesh.points()
    g = np.exp(-((x - y[0]) ** 2 + (yy - y[1]) ** 2) / (2.0 * width**2))
    if dirichlet:
        g[:, 0] = 0.0
        g[:, -1] = 0.0
        g[-1, :] = 0.0
    mass = float(np.sum(mesh.space_weights() * g))
    if mass <= 0.0:
        raise ValueError("mollified source has no mass on the mesh")
    return g / mass


def green(bc: str, domain: WedgeDomain, path: CoefficientPath,
          y: tuple[float, float], s: float, mesh: SectorMesh,
          mollifier_width: float | None = None,
          vertex_lambda: float | None = None) -> GreenTable:
    """Numerical Green function: evolve a normalized bump planted at (y, s).

    The default width is 4 local cells at y; anything under 3 cells is
    rejected as unresolved.  Values approximate the kernel for elapsed
    times well beyond width^2.
    """
    if abs(mesh.times[0] - s) > 1e-12:
        raise ValueError("mesh window must start at the source time s")
    h_local = mesh.local_cell_size(*y)
    width = 4.0 * h_local if mollifier_width is None else float(mollifier_width)
    if width < 3.0 * h_local:
        raise ValueError(
            f"mollifier width {width:.4g} under-resolved: local cell {h_local:.4g}"
        )
    g = domain.geometry_at([y[0], y[1]])
    if not g.inside or g.d <= 2.0 * width:
        raise ValueError("source must sit inside with clearance 2 width")
    spec = ProblemSpec(bc=bc, domain=domain, path=path,
                       vertex_lambda=vertex_lambda)
    bump = mollified_bump(mesh, y, width, dirichlet=(bc == "dirichlet"))
    table = solve(spec, mesh, initial_values=bump)
    table.meta.update({"y": y, "s": s, "width": width})
    return GreenTable(grid=table, y=tuple(y), s=float(s), width=width)
