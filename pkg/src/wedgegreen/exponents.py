"""Critical vertex-decay exponents for the wedge.

Two routes:

 * ``lambda_dirichlet``: the explicit corner exponent for the Laplacian,
   -(m-2)/2 + sqrt(Lambda_1 + (m-2)^2/4), with Lambda_1 the first Dirichlet
   eigenvalue of the Laplace-Beltrami operator on the spherical cross
   section.  For planar sectors that is (pi/theta0)^2, so the exponent is
   pi/theta0; for axisymmetric caps in R^3 a one-dimensional Legendre-type
   eigensolve supplies Lambda_1.

 * ``estimate_lambda_c``: an empirical decay fit for general time-dependent
   coefficients.  Solve L u = 0 in the parabolic box over the sector with
   the lateral boundary pinned to zero, seed bounded data away from the
   vertex, record sup |u| over shrinking parabolic sub-boxes at radii
   R 2^-j, and regress log sup against log radius.  The true exponent is a
   supremum over all local solutions, which no finite procedure reaches;
   the positive annulus seed is the empirically slowest-decaying one, and
   the report carries fit residuals rather than a certified value.

The second exponent (sign = minus) is the first one for the time-reversed
coefficient path, by definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientPath
from .geometry import Sector, WedgeDomain
from .solver import ProblemSpec, SectorMesh, solve

KAPPA = 0.75  # normalization box ratio; the definition is insensitive to it


# ---------------------------------------------------------------------------
# explicit route (property of the Laplacian)
# ---------------------------------------------------------------------------


def corner_exponent_from_eigenvalue(lambda_beltrami: float, m: int) -> float:
    return -(m - 2) / 2.0 + math.sqrt(lambda_beltrami + (m - 2) ** 2 / 4.0)


def cap_beltrami_eigenvalue(cap_half_angle: float, n_grid: int = 1200) -> float:
    """First Dirichlet eigenvalue of the Beltrami operator on a spherical cap.

    Solves -(sin t w')' = Lambda sin t w on (0, cap), w(cap) = 0, regular at
    0, by a flux-form finite-difference generalized eigenproblem on two
    grids with Richardson extrapolation.
    """
    if not 0.0 < cap_half_angle < math.pi:
        raise ValueError("cap half-angle must lie in (0, pi)")

    def smallest(nn: int) -> float:
        h = cap_half_angle / (nn + 0.5)  # staggered: nodes at (i+1/2) h
        t = (np.arange(nn) + 0.5) * h
        faces = np.arange(nn + 1) * h
        sf = np.sin(faces)
        main = (sf[:-1] + sf[1:]) / h**2
        off = -sf[1:-1] / h**2
        # Dirichlet at the cap edge: last face flux uses w=0 ghost
        a = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
        b = np.diag(np.sin(t))
        from scipy.linalg import eigh
        w = eigh(a, b, eigvals_only=True, subset_by_index=[0, 0])
        return float(w[0])

    lam_h = smallest(n_grid)
    lam_h2 = smallest(2 * n_grid)
    return (4.0 * lam_h2 - lam_h) / 3.0


def lambda_dirichlet(domain: WedgeDomain) -> float:
    """Corner exponent of the heat operator (unit coefficients) on the wedge."""
    if isinstance(domain.cone, Sector):
        return math.pi / domain.cone.theta0
    if domain.cone.cap_half_angle is not None and domain.m == 3:
        lam = cap_beltrami_eigenvalue(domain.cone.cap_half_angle)
        return corner_exponent_from_eigenvalue(lam, m=3)
    raise ValueError(
        "explicit exponent available for planar sectors and axisymmetric caps only"
    )


# ---------------------------------------------------------------------------
# decay-fit route
# ---------------------------------------------------------------------------


@dataclass
class DecayFitConfig:
    box_radius: float = 1.0           # ladder anchor R
    solve_radius_factor: float = 3.0  # outer wall at factor * R
    window_factor: float = 2.0        # time window length, in units of R^2
    n_r: int = 180
    n_theta: int = 72
    n_t: int = 192
    ladder: int = 5                   # radii R 2^-j, j = 1..ladder
    seeds: tuple[str, ...] = ("annulus",)
    residual_threshold: float = 0.1   # in log2 units
    two_pass: bool = True
    rmin_frac: float = 1e-3           # of the ladder anchor R


@dataclass
class CriticalExponentReport:
    lam: float
    method: str
    sign: str
    fit_diagnostics: dict = field(default_factory=dict)
    reliable: bool = True

    def __post_init__(self):
        if self.method in ("closed_form", "eigen_solve") and self.lam <= 0.0:
            raise ValueError("explicit exponents are strictly positive")


def _seed_values(kind: str, mesh: SectorMesh) -> np.ndarray:
    r = mesh.r[:, None]
    th = mesh.theta[None, :]
    big_r = mesh.r[-1]
    if kind == "annulus":
        return ((r >= 0.5 * big_r) & (r <= 0.75 * big_r)) * np.ones_like(th)
    if kind == "annulus_low":
        return ((r >= 0.35 * big_r) & (r <= 0.55 * big_r)) * np.ones_like(th)
    if kind == "theta_bump":
        t0 = mesh.theta0
        prof = np.exp(-((th - t0 / 3.0) / (t0 / 4.0)) ** 2)
        return ((r >= 0.5 * big_r) & (r <= 0.75 * big_r)) * prof
    if kind == "signed":
        t0 = mesh.theta0
        return ((r >= 0.5 * big_r) & (r <= 0.75 * big_r)) * np.sin(2 * math.pi * th / t0)
    raise ValueError(f"unknown seed kind {kind!r}")


def _window(path: CoefficientPath, r2: float) -> tuple[float, float]:
    """Deterministic time window of length R^2; centered on the jump span so
    the discontinuities actually act during the solve."""
    if path.jumps:
        mid = 0.5 * (path.jumps[0] + path.jumps[-1])
    else:
        mid = 0.0
    return mid - 0.5 * r2, mid + 0.5 * r2


def _fit_one_seed(path, domain, seed, cfg: DecayFitConfig, vertex_lambda):
    # The ladder radii live well inside the solve box: near the outer wall
    # the late-time profile is an eigenfunction, not a corner power, so the
    # wall sits at solve_radius_factor * R away from the sampled region.
    theta0 = domain.cone.theta0
    big_r = cfg.box_radius
    t_begin, t_end = _window(path, cfg.window_factor * big_r**2)
    mesh = SectorMesh.build(theta0, rmax=cfg.solve_radius_factor * big_r,
                            n_r=cfg.n_r, n_theta=cfg.n_theta,
                            t_begin=t_begin, t_end=t_end, n_t=cfg.n_t,
                            rmin=cfg.rmin_frac * big_r, path=path)
    spec = ProblemSpec(bc="dirichlet", domain=domain, path=path,
                       vertex_lambda=vertex_lambda)
    u = solve(spec, mesh, initial_values=_seed_values(seed, mesh))

    # Sample the boxes on the anchor slice t = t_end.  Every parabolic box
    # contains that slice; spreading the sup over the box's time thickness
    # would fold the solution's exponential decay in t into the radius
    # scaling and corrupt the spatial exponent.
    radii = big_r * 0.5 ** np.arange(1, cfg.ladder + 1)
    final = np.abs(u.values[-1])
    sups = []
    for rho in radii:
        sel_r = mesh.r <= rho + 1e-12
        sups.append(float(final[sel_r].max()))
    norm = float(final[mesh.r <= KAPPA * big_r + 1e-12].max())

    logs = np.log2(np.array(sups) / norm)
    logr = np.log2(radii / big_r)
    slope, intercept = np.polyfit(logr, logs, 1)
    residual = float(np.max(np.abs(intercept + slope * logr - logs)))
    return float(slope), residual, radii, sups


def estimate_lambda_c(path: CoefficientPath, domain: WedgeDomain, sign: str,
                      config: DecayFitConfig | None = None) -> CriticalExponentReport:
    """Empirical decay exponent; for sign='minus' the estimator runs on the
    time-reversed path, which realizes the definition of the second exponent."""
    if sign not in ("plus", "minus"):
        raise ValueError("sign must be 'plus' or 'minus'")
    if not isinstance(domain.cone, Sector) or domain.n != 2:
        raise ValueError("the decay fit runs on planar sectors (m = n = 2)")
    cfg = config or DecayFitConfig()
    work_path = path.time_reverse() if sign == "minus" else path

    per_seed = {}
    for seed in cfg.seeds:
        lam1, res1, radii, sups = _fit_one_seed(work_path, domain, seed, cfg,
                                                vertex_lambda=1.0)
        if cfg.two_pass:
            lam_ext = float(np.clip(lam1, 0.1, 5.0))
            lam2, res2, radii, sups = _fit_one_seed(work_path, domain, seed, cfg,
                                                    vertex_lambda=lam_ext)
        else:
            lam2, res2 = lam1, res1
        per_seed[seed] = {"lambda": lam2, "residual": res2,
                          "radii": list(radii), "sups": sups}

    # the definition is a bound over all solutions: keep the slowest decay
    worst_seed = min(per_seed, key=lambda k: per_seed[k]["lambda"])
    best = per_seed[worst_seed]
    reliable = best["residual"] <= cfg.residual_threshold
    return CriticalExponentReport(
        lam=best["lambda"], method="decay_fit", sign=sign,
        fit_diagnostics={
            "radii": best["radii"], "sups": best["sups"],
            "residual": best["residual"], "kappa": KAPPA,
            "seed": worst_seed, "per_seed": per_seed,
        },
        reliable=reliable,
    )
