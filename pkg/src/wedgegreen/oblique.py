"""Oblique-derivative Green function built from the Dirichlet one.

For a graph cone {x1 > phi(xhat)} the kernel of the problem with boundary
condition D_1 u = 0 is obtained by integrating the y1-derivative of the
Dirichlet kernel along the graph axis through x:

    N(x, y; t, s) = integral_{x1}^{inf} d/dy1 D((zeta, xhat, x''), y; t, s) dzeta

and consequently D_{x1} N = - D_{y1} D.  Both facts are exercised here
numerically: the integral is evaluated by panel Gauss quadrature over a
Gaussian-tail-truncated interval, with the y1-derivative supplied either by
centered differences of two solver tables (sources shifted along the axis)
or by an analytic closed form in tests.

A second, independent route to the same kernel is the direct oblique solve;
``cross_check`` confronts the two on the standard comparison region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .coefficients import CoefficientPath
from .geometry import WedgeDomain
from .samples import KernelSample
from .solver import GreenTable, SectorMesh, green
from .wholespace import gamma_deriv, mollified_gamma

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


class TruncationError(RuntimeError):
    """The Gaussian-tail truncation of the axis integral is too short."""


@dataclass
class ObliqueGreenTable:
    """Sampled oblique kernel values with their construction provenance."""

    samples: list[KernelSample]
    provenance: str  # "direct_solve" or "formula"
    y: tuple[float, float]
    s: float
    width: float

    def __post_init__(self):
        if self.provenance not in ("direct_solve", "formula"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def value_map(self) -> dict:
        return {(s.x, s.t): s.value for s in self.samples}


# ---------------------------------------------------------------------------
# table interpolation and the y1-difference provider
# ---------------------------------------------------------------------------


def _slice_interpolator(mesh: SectorMesh, values: np.ndarray):
    logr = np.log(mesh.r)
    interp = RegularGridInterpolator((logr, mesh.theta), values,
                                     method="linear", bounds_error=False,
                                     fill_value=None)

    def at(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * math.pi)
        r = np.clip(r, mesh.r[0], mesh.r[-1])
        th = np.clip(th, mesh.theta[0], mesh.theta[-1])
        return interp(np.stack([np.log(r), th], axis=-1))

    return at


class TableInterpolator:
    """Point evaluation of a solver table, linear in (log r, theta)."""

    def __init__(self, table: GreenTable):
        self.table = table
        self.mesh = table.mesh
        self._slices: dict[int, Callable] = {}

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.mesh.times - t)))
        if abs(self.mesh.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a mesh time")
        return k

    def at(self, pts, t: float) -> np.ndarray:
        k = self.time_index(t)
        if k not in self._slices:
            self._slices[k] = _slice_interpolator(self.mesh, self.table.grid.values[k])
        return self._slices[k](pts)


class DirichletAxisDerivative:
    """d/dy1 of the Dirichlet kernel via two solves with sources y +- h e1."""

    def __init__(self, domain: WedgeDomain, path: CoefficientPath,
                 y: tuple[float, float], s: float, mesh: SectorMesh,
                 h: float | None = None, mollifier_width: float | None = None):
        self.domain = domain
        self.y = tuple(y)
        self.s = float(s)
        axis = domain.from_graph_coords(1.0, [0.0]) - domain.from_graph_coords(0.0, [0.0])
        self.axis = axis[:2] / np.linalg.norm(axis[:2])
        h_local = mesh.local_cell_size(*y)
        self.h = 2.0 * h_local if h is None else float(h)
        y_plus = (y[0] + self.h * self.axis[0], y[1] + self.h * self.axis[1])
        y_minus = (y[0] - self.h * self.axis[0], y[1] - self.h * self.axis[1])
        for yy in (y_plus, y_minus):
            g = domain.geometry_at([yy[0], yy[1]])
            if not g.inside or g.d <= self.h:
                raise ValueError("source too close to the boundary for the "
                                 "y1-difference stencil")
        tab_p = green("dirichlet", domain, path, y_plus, s, mesh,
                      mollifier_width=mollifier_width)
        self.width = tab_p.width
        tab_m = green("dirichlet", domain, path, y_minus, s, mesh,
                      mollifier_width=self.width)
        self.plus = TableInterpolator(tab_p)
        self.minus = TableInterpolator(tab_m)
        self.mesh = mesh

    def __call__(self, pts, t: float) -> np.ndarray:
        return (self.plus.at(pts, t) - self.minus.at(pts, t)) / (2.0 * self.h)


# ---------------------------------------------------------------------------
# the axis-integral construction
# ---------------------------------------------------------------------------


def _panel_nodes(a: float, b: float, n_panels: int):
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    nodes = (mid + half * GL_NODES[None, :]).reshape(-1)
    weights = (half * GL_WEIGHTS[None, :]).reshape(-1)
    return nodes, weights


def green_oblique_via_formula(dy1_provider: Callable, domain: WedgeDomain,
                              x, t: float, s: float, z_cut: float = 8.0,
                              n_panels: int = 24, tail_rtol: float = 5e-3,
                              halving_check: bool = True,
                              nu: float = 1.0) -> float:
    """Axis integral of the y1-derivative of the Dirichlet kernel.

    Integrates over zeta in [x1, x1 + z_cut sqrt(t-s)].  The dropped tail
    is estimated from the halving shell: the Gaussian envelope with rate
    nu/4 shrinks successive dyadic shells by exp(-3 nu z^2 / 16), so the
    remainder beyond z_cut is bounded by that multiple of the measured
    [z/2, z] shell.  Raises when the estimate exceeds ``tail_rtol``.
    """
    if t <= s:
        return 0.0
    x = np.asarray(x, dtype=float)
    x1, xhat, _ = domain.to_graph_coords(x)
    span = z_cut * math.sqrt(t - s)

    def integral(upper: float) -> float:
        nodes, weights = _panel_nodes(x1, x1 + upper, n_panels)
        pts = np.stack([domain.from_graph_coords(z, xhat)[:2] for z in nodes])
        vals = np.asarray(dy1_provider(pts, t), dtype=float)
        return float(np.sum(weights * vals))

    full = integral(span)
    if halving_check:
        shell = abs(full - integral(0.5 * span))
        decay = math.exp(-3.0 * nu * z_cut**2 / 16.0)
        tail = shell * decay / max(1.0 - decay, 0.5)
        if tail > tail_rtol * max(abs(full), 1e-300):
            raise TruncationError(
                f"axis truncation at z={z_cut} not converged: estimated tail "
                f"{tail:.3g} vs value {full:.3g}"
            )
    return full


def formula_table(dy1_provider, domain: WedgeDomain, xs, ts, s: float,
                  y: tuple[float, float], width: float,
                  **quad_opts) -> ObliqueGreenTable:
    samples = []
    for t in ts:
        for x in xs:
            v = green_oblique_via_formula(dy1_provider, domain, x, t, s,
                                          **quad_opts)
            samples.append(KernelSample(tuple(x), tuple(y), float(t), s,
                                        (0, 0), (0, 0), False, v, kind="N"))
    return ObliqueGreenTable(samples=samples, provenance="formula", y=tuple(y),
                             s=s, width=width)


def direct_table(table: GreenTable, xs, ts) -> ObliqueGreenTable:
    """Sample a direct oblique solve at the same points as a formula table."""
    interp = TableInterpolator(table)
    samples = []
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    for t in ts:
        vals = interp.at(xs, t)
        for x, v in zip(xs, vals):
            samples.append(KernelSample(tuple(x), tuple(table.y), float(t),
                                        table.s, (0, 0), (0, 0), False,
                                        float(v), kind="N"))
    return ObliqueGreenTable(samples=samples, provenance="direct_solve",
                             y=tuple(table.y), s=table.s, width=table.width)


@dataclass
class CrossCheckReport:
    rel_l2: float
    rel_sup: float
    n_points: int
    passed: bool
    threshold: float = 0.05
    detail: dict = field(default_factory=dict)


def cross_check(direct: ObliqueGreenTable, formula: ObliqueGreenTable,
                threshold: float = 0.05) -> CrossCheckReport:
    """Relative L2 and sup discrepancy between the two constructions on the
    common sample set; both tables must share the source."""
    if direct.y != formula.y or direct.s != formula.s:
        raise ValueError("tables answer different sources (y, s)")
    d_map = direct.value_map()
    f_map = formula.value_map()
    common = sorted(set(d_map) & set(f_map))
    if not common:
        raise ValueError("no overlapping samples to compare")
    dv = np.array([d_map[k] for k in common])
    fv = np.array([f_map[k] for k in common])
    ref = math.sqrt(float(np.mean(dv**2)))
    rel_l2 = math.sqrt(float(np.mean((dv - fv) ** 2))) / ref
    rel_sup = float(np.max(np.abs(dv - fv))) / float(np.max(np.abs(dv)))
    return CrossCheckReport(rel_l2=rel_l2, rel_sup=rel_sup,
                            n_points=len(common),
                            passed=rel_l2 <= threshold, threshold=threshold,
                            detail={"n_times": len({k[1] for k in common})})


# ---------------------------------------------------------------------------
# difference-kernel samples N - Gamma
# ---------------------------------------------------------------------------

_X_OPS = {(0, 0): None, (1, 0): "Dx", (0, 1): "Dy",
          (2, 0): "Dxx", (1, 1): "Dxy", (0, 2): "Dyy"}


def difference_samples(table: GreenTable, path: CoefficientPath, xs, ts,
                       alpha=(0, 0), beta=(0, 0),
                       y_shift_tables: dict | None = None) -> list[KernelSample]:
    """Samples of D_x^alpha D_y^beta (N - Gamma) on the given points/times.

    The numerical part is differentiated with the mesh stencils (x) and by
    centered source shifts (y, requiring ``y_shift_tables`` holding tables
    for y +- h e_i keyed by (i, +1) / (i, -1) plus key "h"); the whole-space
    part is the analytic derivative of the consistently mollified kernel.
    """
    alpha = tuple(int(a) for a in alpha)
    beta = tuple(int(b) for b in beta)
    if alpha not in _X_OPS:
        raise ValueError(f"unsupported spatial multi-index {alpha}")
    if sum(beta) > 1:
        raise ValueError("at most one source derivative is supported")

    def numeric_field(tab: GreenTable) -> np.ndarray:
        name = _X_OPS[alpha]
        return tab.grid.values if name is None else tab.grid.derivative_fields(name)

    if sum(beta) == 0:
        tabs = [(1.0, table)]
    else:
        if y_shift_tables is None:
            raise ValueError("source-derivative samples need y_shift_tables")
        i = beta.index(1)
        h = y_shift_tables["h"]
        tabs = [(0.5 / h, y_shift_tables[(i, +1)]),
                (-0.5 / h, y_shift_tables[(i, -1)])]

    mesh = table.mesh
    fields = [(c, TableInterpolator(
        GreenTable(grid=type(tab.grid)(values=numeric_field(tab), mesh=mesh,
                                       bc=tab.grid.bc),
                   y=tab.y, s=tab.s, width=tab.width)))
        for c, tab in tabs]

    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    y0 = np.asarray(table.y, dtype=float)
    out = []
    for t in ts:
        num = np.zeros(len(xs))
        for c, itp in fields:
            num = num + c * itp.at(xs, t)
        ana = np.array([
            _mollified_deriv(path, alpha, beta, x, y0, t, table.s, table.width)
            for x in xs])
        for x, v in zip(xs, num - ana):
            out.append(KernelSample(tuple(x), tuple(table.y), float(t), table.s,
                                    alpha, beta, False, float(v),
                                    kind="N_minus_Gamma"))
    return out


def _mollified_deriv(path, alpha, beta, x, y, t, s, width):
    """Analytic D_x^a D_y^b of the width-mollified whole-space kernel."""
    if sum(alpha) + sum(beta) == 0:
        return float(mollified_gamma(path, x, y, t, s, width))
    # the mollified kernel is the sharp kernel of an augmented covariance;
    # reuse the polynomial calculus through a central-difference-free route:
    # d/dz of N(z; C) has the same polynomial recursion with M = C/2
    from .wholespace import _derivative_polynomial, _poly_eval

    n = path.dimension
    cov = 2.0 * path.integrate(s, t) + width**2 * np.eye(n)
    minv = 2.0 * np.linalg.inv(cov)  # exponent is z C^-1 z / 2 = z (C/2)^-1 z / 4
    total = tuple(a + b for a, b in zip(alpha, beta))
    poly = _derivative_polynomial(minv, total)
    sign = -1.0 if sum(beta) % 2 else 1.0
    z = np.asarray(x, float) - np.asarray(y, float)
    return sign * float(_poly_eval(poly, z)) * float(
        mollified_gamma(path, x, y, t, s, width))
