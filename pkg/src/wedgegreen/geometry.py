"""Wedge domains K x R^(n-m) and their geometric kernel factors.

The cone K in R^m is either a planar sector {0 < theta < theta0} or a
strictly Lipschitz graph {x1 > phi(xhat)} with phi positively homogeneous
of degree 1.  Every kernel estimate in the package is phrased through
three geometric quantities at a point x with cone part x':

    d(x)  distance from x to the wedge boundary (a function of x' only),
    r_x   = d(x)/|x'|,
    R_xt  = |x'|/(|x'| + sqrt(t)).

A sector with opening theta0 <= pi has an equivalent graph form: rotate by
-theta0/2 so the bisector becomes the x1-axis; the boundary rays then sit
at angles +-theta0/2, i.e. phi(xhat) = |xhat| * cot(theta0/2) and the
Lipschitz constant is cot(theta0/2) = tan((pi - theta0)/2).  For
theta0 > pi no graph over xhat exists and graph-based operations reject
the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import kvio


class GeometryFactors(NamedTuple):
    d: float
    r_x: float
    R_xt: float
    inside: bool


def _dist_to_ray(p: np.ndarray, direction: np.ndarray) -> float:
    """Distance from p to the ray {u * direction : u >= 0} (unit direction)."""
    proj = float(p @ direction)
    if proj <= 0.0:
        return float(np.linalg.norm(p))
    return math.sqrt(max(float(p @ p) - proj * proj, 0.0))


@dataclass(frozen=True)
class Sector:
    """Planar cone {0 < theta < theta0} in polar coordinates, 0 < theta0 < 2 pi."""

    theta0: float

    def __post_init__(self):
        if not 0.0 < self.theta0 < 2.0 * math.pi:
            raise ValueError(f"sector opening must lie in (0, 2 pi), got {self.theta0}")

    @property
    def m(self) -> int:
        return 2

    def signed_distance(self, xp: np.ndarray) -> tuple[float, bool]:
        r = float(np.linalg.norm(xp))
        if r == 0.0:
            return 0.0, False
        ang = math.atan2(xp[1], xp[0]) % (2.0 * math.pi)
        inside = 0.0 < ang < self.theta0
        e0 = np.array([1.0, 0.0])
        e1 = np.array([math.cos(self.theta0), math.sin(self.theta0)])
        d = min(_dist_to_ray(xp, e0), _dist_to_ray(xp, e1))
        return (d if inside else -d), inside


@dataclass(frozen=True)
class LipschitzGraphCone:
    """K = {x' = (x1, xhat) : x1 > phi(xhat)} with phi 1-homogeneous Lipschitz."""

    phi: Callable[[np.ndarray], float]
    Lambda: float
    m: int
    cap_half_angle: float | None = None  # set for circular cones (axisymmetric)

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("graph cones need m >= 2")
        if self.Lambda < 0.0:
            raise ValueError("Lipschitz constant must be >= 0")
        rng = np.random.default_rng(0)
        zero = np.zeros(self.m - 1)
        if abs(float(self.phi(zero))) > 1e-12:
            raise ValueError("phi(0) must be 0 for a cone")
        for _ in range(32):
            a = rng.standard_normal(self.m - 1)
            b = rng.standard_normal(self.m - 1)
            fa, fb = float(self.phi(a)), float(self.phi(b))
            if abs(float(self.phi(2.0 * a)) - 2.0 * fa) > 1e-9 * (1.0 + abs(fa)):
                raise ValueError("phi is not positively homogeneous of degree 1")
            gap = abs(fa - fb) - self.Lambda * float(np.linalg.norm(a - b))
            if gap > 1e-9 * (1.0 + abs(fa) + abs(fb)):
                raise ValueError("phi violates the declared Lipschitz constant")

    def _planar_slopes(self) -> tuple[float, float]:
        # m = 2: homogeneous phi on R is two-slope, phi(h) = c+ h (h>0), c- h (h<0)
        return float(self.phi(np.array([1.0]))), -float(self.phi(np.array([-1.0])))

    def signed_distance(self, xp: np.ndarray) -> tuple[float, bool]:
        x1, xhat = float(xp[0]), np.asarray(xp[1:], dtype=float)
        inside = x1 > float(self.phi(xhat))
        if self.m == 2:
            sp, sm = self._planar_slopes()
            ray_pos = np.array([sp, 1.0]) / math.hypot(sp, 1.0)
            ray_neg = np.array([-sm, -1.0]) / math.hypot(sm, 1.0)
            d = min(_dist_to_ray(xp, ray_pos), _dist_to_ray(xp, ray_neg))
        else:
            d = self._distance_by_projection(xp)
        return (d if inside else -d), inside

    def _distance_by_projection(self, xp: np.ndarray) -> float:
        from scipy.optimize import minimize

        rho = float(np.linalg.norm(xp))
        if rho == 0.0:
            return 0.0
        xs = xp / rho  # the boundary is a cone: distance is 1-homogeneous

        def objective(zhat):
            w = np.empty(self.m)
            w[0] = self.phi(zhat)
            w[1:] = zhat
            return float(np.sum((xs - w) ** 2))

        best = math.inf
        starts = [xs[1:], 0.5 * xs[1:], np.zeros(self.m - 1)]
        for z0 in starts:
            res = minimize(objective, z0, method="L-BFGS-B")
            best = min(best, float(res.fun))
        return rho * math.sqrt(max(best, 0.0))


@dataclass(frozen=True)
class WedgeDomain:
    """The wedge K x R^(n-m); points are x = (x', x'') with x' in R^m."""

    m: int
    n: int
    cone: Sector | LipschitzGraphCone

    def __post_init__(self):
        if not 2 <= self.m <= self.n:
            raise ValueError(f"need 2 <= m <= n, got m={self.m}, n={self.n}")
        if isinstance(self.cone, Sector) and self.m != 2:
            raise ValueError("sector cones are planar (m = 2)")
        if isinstance(self.cone, LipschitzGraphCone) and self.cone.m != self.m:
            raise ValueError("cone dimension disagrees with m")

    # -- core factors --------------------------------------------------------

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"point has dimension {x.shape[-1]}, domain has n={self.n}")
        return x[..., : self.m], x[..., self.m:]

    def geometry_at(self, x, t: float = 0.0) -> GeometryFactors:
        if t < 0.0:
            raise ValueError("elapsed time must be >= 0")
        xp, _ = self.split(x)
        d, inside = self.cone.signed_distance(np.asarray(xp, dtype=float))
        rho = float(np.linalg.norm(xp))
        if rho == 0.0:
            raise ValueError("geometric factors undefined on the vertex axis x' = 0")
        return GeometryFactors(d=d, r_x=d / rho, R_xt=rho / (rho + math.sqrt(t)),
                               inside=inside)

    # -- graph representation --------------------------------------------------

    @property
    def is_graph(self) -> bool:
        if isinstance(self.cone, LipschitzGraphCone):
            return True
        return self.cone.theta0 <= math.pi

    def graph_lambda(self) -> float:
        if isinstance(self.cone, LipschitzGraphCone):
            return self.cone.Lambda
        if not self.is_graph:
            raise ValueError(
                f"sector with opening {self.cone.theta0} > pi has no graph form"
            )
        return math.tan((math.pi - self.cone.theta0) / 2.0)

    def graph_form(self) -> "WedgeDomain":
        """The same cone as a Lipschitz graph (sector rotated onto its bisector)."""
        if isinstance(self.cone, LipschitzGraphCone):
            return self
        lam = self.graph_lambda()  # raises for theta0 > pi
        slope = 1.0 / math.tan(self.cone.theta0 / 2.0) if self.cone.theta0 != math.pi else 0.0

        def phi(xhat, _c=slope):
            return _c * abs(float(xhat[0]))

        return WedgeDomain(self.m, self.n,
                           LipschitzGraphCone(phi=phi, Lambda=abs(lam), m=2))

    def to_graph_coords(self, x) -> tuple[float, np.ndarray, np.ndarray]:
        """(x1, xhat, x'') of a point in the cone's graph frame.

        For sectors this applies the bisector rotation; for graph cones the
        stored coordinates already are the graph frame.
        """
        xp, xpp = self.split(x)
        if isinstance(self.cone, Sector):
            if not self.is_graph:
                raise ValueError("no graph coordinates: sector opening exceeds pi")
            half = 0.5 * self.cone.theta0
            e_axis = np.array([math.cos(half), math.sin(half)])
            e_perp = np.array([-math.sin(half), math.cos(half)])
            return float(xp @ e_axis), np.array([float(xp @ e_perp)]), xpp
        return float(xp[0]), np.asarray(xp[1:], dtype=float), xpp

    def from_graph_coords(self, x1: float, xhat, xpp=()) -> np.ndarray:
        xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
        if isinstance(self.cone, Sector):
            half = 0.5 * self.cone.theta0
            e_axis = np.array([math.cos(half), math.sin(half)])
            e_perp = np.array([-math.sin(half), math.cos(half)])
            xp = x1 * e_axis + xhat[0] * e_perp
        else:
            xp = np.concatenate([[x1], xhat])
        return np.concatenate([xp, np.asarray(xpp, dtype=float)])

    # -- serialization ----------------------------------------------------------

    def to_kv(self) -> dict[str, str]:
        out = {"m": str(self.m), "n": str(self.n)}
        if isinstance(self.cone, Sector):
            out["sector.theta0"] = kvio.fmt_float(self.cone.theta0)
        elif self.cone.cap_half_angle is not None:
            out["cone.cap_angle"] = kvio.fmt_float(self.cone.cap_half_angle)
        elif self.m == 2:
            sp, sm = self.cone._planar_slopes()
            out["graph.slope_pos"] = kvio.fmt_float(sp)
            out["graph.slope_neg"] = kvio.fmt_float(sm)
        else:
            raise ValueError("general graph cones with m > 2 have no text form")
        return out

    @classmethod
    def from_kv(cls, entries: dict[str, str]) -> "WedgeDomain":
        m = int(entries.get("m", "2"))
        n = int(entries.get("n", str(m)))
        if "sector.theta0" in entries:
            return cls(m, n, Sector(float(entries["sector.theta0"])))
        if "cone.cap_angle" in entries:
            return make_circular_cone(float(entries["cone.cap_angle"]), m=m, n=n)
        if "graph.slope_pos" in entries:
            sp = float(entries["graph.slope_pos"])
            sm = float(entries["graph.slope_neg"])
            return make_two_slope_cone(sp, sm, n=n)
        raise ValueError("domain file carries no recognizable cone description")

    def save(self, path) -> None:
        kvio.write_kv(path, self.to_kv())

    @classmethod
    def load(cls, path) -> "WedgeDomain":
        return cls.from_kv(kvio.read_kv(path))


# -- constructors ---------------------------------------------------------------


def make_sector(theta0: float, n: int = 2) -> WedgeDomain:
    return WedgeDomain(m=2, n=n, cone=Sector(theta0=float(theta0)))


def make_lipschitz_cone(phi, Lambda: float, m: int, n: int | None = None) -> WedgeDomain:
    n = m if n is None else n
    return WedgeDomain(m=m, n=n, cone=LipschitzGraphCone(phi=phi, Lambda=float(Lambda), m=m))


def make_two_slope_cone(slope_pos: float, slope_neg: float, n: int = 2) -> WedgeDomain:
    """Planar graph cone x1 > phi(h), phi(h) = slope_pos*h (h>0), -slope_neg*h (h<0)."""

    def phi(xhat):
        h = float(xhat[0])
        return slope_pos * h if h >= 0.0 else -slope_neg * h

    lam = max(abs(slope_pos), abs(slope_neg))
    return WedgeDomain(m=2, n=n, cone=LipschitzGraphCone(phi=phi, Lambda=lam, m=2))


def make_circular_cone(cap_half_angle: float, m: int = 3, n: int | None = None) -> WedgeDomain:
    """Axisymmetric cone {angle(x', axis) < cap_half_angle}, a graph for any
    cap angle in (0, pi)."""
    if not 0.0 < cap_half_angle < math.pi:
        raise ValueError("cap half-angle must lie in (0, pi)")
    n = m if n is None else n
    slope = 1.0 / math.tan(cap_half_angle)

    def phi(xhat, _c=slope):
        return _c * float(np.linalg.norm(xhat))

    cone = LipschitzGraphCone(phi=phi, Lambda=abs(slope), m=m,
                              cap_half_angle=float(cap_half_angle))
    return WedgeDomain(m=m, n=n, cone=cone)
