"""Weighted anisotropic space-time norms and coercivity experiments.

Two mixed-norm orders for a field u(x; t) with the power weight |x'|^mu:

    pq-variant     : integrate |x'|^(mu p) |u|^p over space first, then
                     aggregate the time slices in the q-th power;
    tilde-variant  : integrate |u|^q over time per node first, then take
                     the weighted spatial p-norm.

For p = q both collapse to the same flat weighted sum and the code paths
coincide exactly.

``mu_interval`` returns the admissible weight-exponent window of each
solvability regime as a closed-form function of (m, p) and the two critical
exponents; ``coercive_ratio``/``sweep_mu`` probe the corresponding a-priori
estimate discretely: the ratio of solution-derivative norms to data norms
stays bounded under refinement inside the window and is driven to grow by
vertex-concentrated data outside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .solver import GridFunction, ProblemSpec, SectorMesh, solve

DERIVATIVE_SLICE_START = 1  # slice 0 carries data, not scheme output


@dataclass(frozen=True)
class WeightedNormSpec:
    p: float
    q: float
    variant: str = "pq"  # "pq" or "tilde_pq"

    def __post_init__(self):
        if not (self.p > 1.0 and self.q > 1.0):
            raise ValueError("exponents must be finite and > 1")
        if self.variant not in ("pq", "tilde_pq"):
            raise ValueError(f"unknown norm variant {self.variant!r}")


def weighted_norm(values, mesh: SectorMesh, spec: WeightedNormSpec,
                  weight_exponent: float, mask=None) -> float:
    """Discrete weighted mixed norm of values shaped (times, r, theta).

    ``mask`` (same shape or broadcastable) selects the integration region;
    quadrature weights are the trapezoidal r dr dtheta / dt node weights.
    """
    if isinstance(values, GridFunction):
        values = values.values
    values = np.asarray(values, dtype=float)
    sw = mesh.space_weights()[None, :, :]
    tw = mesh.time_weights()[:, None, None]
    weight = (mesh.r[None, :, None] ** weight_exponent)
    integrand = np.abs(values) * weight
    if mask is not None:
        sel = np.broadcast_to(mask, values.shape)
        integrand = np.where(sel, integrand, 0.0)
    p, q = spec.p, spec.q
    if p == q:
        total = float(np.sum(integrand**p * sw * tw))
        return total ** (1.0 / p)
    if spec.variant == "pq":
        slices = np.sum(integrand**p * sw, axis=(1, 2)) ** (1.0 / p)
        return float(np.sum(slices**q * tw[:, 0, 0]) ** (1.0 / q))
    per_node = np.sum(integrand**q * tw, axis=0) ** (1.0 / q)
    return float(np.sum(per_node**p * sw[0]) ** (1.0 / p))


# ---------------------------------------------------------------------------
# admissible weight windows
# ---------------------------------------------------------------------------

INTERVAL_KINDS = ("whole_space", "dirichlet_2nd", "dirichlet_1st", "oblique")


def mu_interval(kind: str, p: float, m: int, lambda_plus: float,
                lambda_minus: float) -> tuple[float, float]:
    """Admissible (lo, hi) for the weight exponent mu; lo >= hi marks an
    empty window (never raised, the caller sees the degenerate pair)."""
    if kind not in INTERVAL_KINDS:
        raise ValueError(f"unknown interval kind {kind!r}")
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    if lambda_plus <= 0.0 or lambda_minus <= 0.0:
        raise ValueError("critical exponents must be positive")
    base = m / p
    if kind == "whole_space":
        return (-base, m - base)
    if kind == "dirichlet_2nd":
        return (2.0 - base - lambda_plus, m - base + lambda_minus)
    if kind == "dirichlet_1st":
        return (1.0 - base - lambda_plus, m - 1.0 - base + lambda_minus)
    return (-base + max(1.0 - lambda_plus, 0.0),
            m - base - max(1.0 - lambda_minus, 0.0))


# ---------------------------------------------------------------------------
# coercive ratios
# ---------------------------------------------------------------------------


def _interior_mask(mesh: SectorMesh) -> np.ndarray:
    mask = np.zeros((len(mesh.times), len(mesh.r), len(mesh.theta)), dtype=bool)
    mask[DERIVATIVE_SLICE_START:, 1:-1, 1:-1] = True
    return mask


def _hessian_magnitude(u: GridFunction) -> np.ndarray:
    dxx = u.derivative_fields("Dxx")
    dxy = u.derivative_fields("Dxy")
    dyy = u.derivative_fields("Dyy")
    return np.sqrt(dxx**2 + 2.0 * dxy**2 + dyy**2)


def _gradient_magnitude(u: GridFunction) -> np.ndarray:
    dx = u.derivative_fields("Dx")
    dy = u.derivative_fields("Dy")
    return np.sqrt(dx**2 + dy**2)


def coercive_ratio(spec: ProblemSpec, mesh: SectorMesh,
                   norm_spec: WeightedNormSpec, mu: float) -> float:
    """Solution-to-data norm quotient of the discrete solve.

    oblique       : (||x'^mu du/dt|| + ||x'^mu D^2 u||) / ||x'^mu f||
    dirichlet_1st : (||x'^mu Du|| + ||x'^(mu-1) u||) /
                    (||x'^(mu+1) f0|| + ||x'^mu fvec||)
    """
    u = solve(spec, mesh)
    mask = _interior_mask(mesh)
    x, y = mesh.points()

    if spec.bc == "oblique":
        if spec.f is None:
            raise ValueError("oblique ratio needs a plain right-hand side f")
        fvals = np.stack([np.asarray(spec.f(x, y, t), dtype=float)
                          for t in mesh.times])
        den = weighted_norm(fvals, mesh, norm_spec, mu, mask)
        if den == 0.0:
            raise ValueError("degenerate ratio: zero data norm")
        num = (weighted_norm(u.time_derivative(), mesh, norm_spec, mu, mask)
               + weighted_norm(_hessian_magnitude(u), mesh, norm_spec, mu, mask))
        return num / den

    if spec.f0 is None and spec.fvec is None:
        raise ValueError("dirichlet first-order ratio needs (f0, fvec) data")
    den = 0.0
    if spec.f0 is not None:
        f0 = np.stack([np.asarray(spec.f0(x, y, t), dtype=float)
                       for t in mesh.times])
        den += weighted_norm(f0, mesh, norm_spec, mu + 1.0, mask)
    if spec.fvec is not None:
        fv = np.stack([np.sqrt(
            np.asarray(spec.fvec[0](x, y, t), dtype=float) ** 2
            + np.asarray(spec.fvec[1](x, y, t), dtype=float) ** 2)
            for t in mesh.times])
        den += weighted_norm(fv, mesh, norm_spec, mu, mask)
    if den == 0.0:
        raise ValueError("degenerate ratio: zero data norm")
    num = (weighted_norm(_gradient_magnitude(u), mesh, norm_spec, mu, mask)
           + weighted_norm(u.values, mesh, norm_spec, mu - 1.0, mask))
    return num / den


# ---------------------------------------------------------------------------
# the mu sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepSetup:
    """Refinement study configuration for one boundary condition.

    Adversarial data concentrates at the vertex: f = |x'|^(-mu - eps') on
    {|x'| < r0} with a time bump in the first third of the window.  With
    eps' just under m/p the weighted data norm is saturating but finite, so
    growth of the ratio under refinement exposes an inadmissible mu.  Each
    refinement level multiplies the cell counts by ``refine_factor`` and
    shrinks the vertex excision radius by ``rmin_shrink`` so the data can
    actually approach the vertex.
    """

    bc: str
    domain: object
    path: object
    p: float = 2.0
    q: float = 2.0
    variant: str = "pq"
    rmax: float = 4.0
    window: float = 0.6
    n_r: int = 110
    n_theta: int = 40
    n_t: int = 64
    rmin0: float = 4e-3
    refine_factor: float = 1.4
    rmin_shrink: float = 16.0
    data: str = "adversarial"   # or "gaussian"
    eps_prime_ratio: float = 0.95  # eps' = ratio * m / p
    r0: float = 0.5
    stable_drift: float = 0.10
    growth_factor: float = 1.5


def _time_bump(window: float) -> Callable[[float], float]:
    center = window / 6.0
    width = window / 10.0

    def eta(t: float) -> float:
        return math.exp(-((t - center) / width) ** 2)

    return eta


def _sweep_rhs(setup: SweepSetup, mu: float) -> Callable:
    eta = _time_bump(setup.window)
    if setup.data == "gaussian":
        cx = 0.6 * setup.r0 + 0.4
        half = setup.domain.cone.theta0 / 2.0
        x0, y0 = cx * math.cos(half), cx * math.sin(half)

        def f(x, y, t):
            return np.exp(-((x - x0) ** 2 + (y - y0) ** 2) / 0.05) * eta(t)

        return f
    eps_prime = setup.eps_prime_ratio * 2.0 / setup.p  # m = 2 here
    expo = -mu - eps_prime
    r0 = setup.r0

    def f(x, y, t):
        r = np.hypot(x, y)
        cut = 0.5 * (1.0 - np.tanh((r - r0) / (0.15 * r0)))
        return np.where(r > 0, r**expo, 0.0) * cut * eta(t)

    return f


def _level_mesh(setup: SweepSetup, level: int) -> SectorMesh:
    fac = setup.refine_factor**level
    return SectorMesh.build(
        setup.domain.cone.theta0, rmax=setup.rmax,
        n_r=int(round(setup.n_r * fac)) + int(40 * level),
        n_theta=int(round(setup.n_theta * fac)),
        t_begin=0.0, t_end=setup.window,
        n_t=int(round(setup.n_t * fac)),
        rmin=setup.rmin0 / setup.rmin_shrink**level,
        path=setup.path)


@dataclass
class SweepRow:
    mu: float
    level: int
    ratio: float
    flag: str = ""


def sweep_mu(setup: SweepSetup, mu_grid, refinements: int) -> list[SweepRow]:
    """Coercive ratios over (mu, refinement level) with growth flags.

    Flags per mu: "stable" when the ratio drifts less than ``stable_drift``
    from its first level, "growing" when every consecutive quotient is at
    least ``growth_factor``, otherwise "mixed"."""
    norm_spec = WeightedNormSpec(setup.p, setup.q, setup.variant)
    rows: list[SweepRow] = []
    for mu in mu_grid:
        ratios = []
        for level in range(refinements):
            mesh = _level_mesh(setup, level)
            spec = ProblemSpec(bc=setup.bc, domain=setup.domain,
                               path=setup.path, f=_sweep_rhs(setup, mu))
            ratios.append(coercive_ratio(spec, mesh, norm_spec, mu))
        if len(ratios) > 1:
            drift = max(abs(r / ratios[0] - 1.0) for r in ratios)
            quotients = [b / a for a, b in zip(ratios, ratios[1:])]
            if drift < setup.stable_drift:
                flag = "stable"
            elif min(quotients) >= setup.growth_factor:
                flag = "growing"
            else:
                flag = "mixed"
        else:
            flag = ""
        for level, ratio in enumerate(ratios):
            rows.append(SweepRow(mu=float(mu), level=level, ratio=ratio,
                                 flag=flag))
    return rows
