"""Shared test oracles: quadrature, finite differences, random elliptic paths.

These deliberately avoid the library's analytic derivative and integration
paths so each check pits two independent routes against each other.
"""

import numpy as np

from wedgegreen.coefficients import CoefficientPath
from wedgegreen.wholespace import gamma


def random_spd(rng, n, nu_min=0.25):
    """Random symmetric matrix with spectrum in [nu_min, 1/nu_min]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = rng.uniform(nu_min, 1.0 / nu_min, size=n)
    return (q * lam) @ q.T


def random_path(rng, n, max_pieces=4, nu_min=0.25, span=2.0):
    """Random piecewise-constant elliptic coefficient path with jumps in [0, span]."""
    k = int(rng.integers(1, max_pieces + 1))
    jumps = np.sort(rng.uniform(0.0, span, size=k - 1))
    jumps = tuple(np.unique(jumps))
    pieces = tuple(random_spd(rng, n, nu_min) for _ in range(len(jumps) + 1))
    return CoefficientPath(jumps=jumps, pieces=pieces)


def gl_box_nodes(centers, half_widths, npts=64, rotation=None):
    """Tensor Gauss-Legendre nodes/weights on a (possibly rotated) box."""
    x, w = np.polynomial.legendre.leggauss(npts)
    axes, wts = [], []
    for hw in half_widths:
        axes.append(hw * x)
        wts.append(hw * w)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=-1)
    if rotation is not None:
        pts = pts @ np.asarray(rotation).T
    pts = pts + np.asarray(centers, float)
    wgrids = np.meshgrid(*wts, indexing="ij")
    weights = np.ones(pts.shape[0])
    for wg in wgrids:
        weights = weights * wg.reshape(-1)
    return pts, weights


def kernel_mass(path, x, t, s, npts=64):
    """int gamma(x, y; t, s) dy by tensor quadrature aligned with M's eigenbasis."""
    m = path.integrate(s, t)
    lam, q = np.linalg.eigh(m)
    hw = 10.0 * np.sqrt(2.0 * lam)
    pts, w = gl_box_nodes(np.asarray(x, float), hw, npts, rotation=q)
    return float(np.sum(w * gamma(path, x, pts, t, s)))


def chapman_kolmogorov(path, x, y, t, tau, s, npts=64):
    """int gamma(x, z; t, tau) gamma(z, y; tau, s) dz by tensor quadrature.

    Nodes follow the covariance of the product of the two Gaussians so the
    narrow directions stay resolved; the integrand itself is still two
    independent kernel evaluations.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    s1 = 2.0 * path.integrate(tau, t)
    s2 = 2.0 * path.integrate(s, tau)
    prec = np.linalg.inv(s1) + np.linalg.inv(s2)
    cov = np.linalg.inv(prec)
    center = cov @ (np.linalg.solve(s1, x) + np.linalg.solve(s2, y))
    lam, q = np.linalg.eigh(cov)
    hw = 12.0 * np.sqrt(lam)
    pts, w = gl_box_nodes(center, hw, npts, rotation=q)
    vals = gamma(path, x, pts, t, tau) * gamma(path, pts, y, tau, s)
    return float(np.sum(w * vals))


def fd_gamma_deriv(path, alpha, beta, x, y, t, s, h=1e-4, d_s=False):
    """Composite central-difference oracle for D_x^a D_y^b (d/ds) gamma."""
    ops = []
    for i, a in enumerate(alpha):
        ops += [("x", i)] * int(a)
    for i, b in enumerate(beta):
        ops += [("y", i)] * int(b)
    if d_s:
        ops += [("s", 0)]

    def rec(ops, x, y, s):
        if not ops:
            return gamma(path, x, y, t, s)
        (kind, i), rest = ops[0], ops[1:]
        if kind == "x":
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            return (rec(rest, xp, y, s) - rec(rest, xm, y, s)) / (2.0 * h)
        if kind == "y":
            yp, ym = y.copy(), y.copy()
            yp[i] += h
            ym[i] -= h
            return (rec(rest, x, yp, s) - rec(rest, x, ym, s)) / (2.0 * h)
        return (rec(rest, x, y, s + h) - rec(rest, x, y, s - h)) / (2.0 * h)

    return float(rec(ops, np.asarray(x, float).copy(), np.asarray(y, float).copy(), s))
