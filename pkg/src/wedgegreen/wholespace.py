"""Whole-space heat kernel for time-dependent diffusion matrices.

With M(s,t) = int_s^t A(tau) dtau the kernel is the anisotropic Gaussian

    Gamma(x,y;t,s) = (4 pi)^(-n/2) det(M)^(-1/2) exp(-(M^-1 (x-y), (x-y))/4)

for t > s and 0 otherwise.  All derivatives are evaluated analytically:
every D_x^alpha D_y^beta (and one optional d/ds) of a Gaussian is a
polynomial times the Gaussian, and the polynomial is built by the exact
recursion  D_i (P G) = (dP/dz_i + P L_i) G  with L the gradient of log G.
Finite differencing is never used here; it exists only as a test oracle.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .coefficients import CoefficientPath
from .samples import KernelSample, MultiIndex

# -- polynomial-times-Gaussian calculus --------------------------------------
# A polynomial in z in R^n is a dict {exponent tuple: coefficient}.


def _poly_diff(p: dict, i: int) -> dict:
    out: dict = {}
    for e, c in p.items():
        if e[i] > 0:
            e2 = e[:i] + (e[i] - 1,) + e[i + 1:]
            out[e2] = out.get(e2, 0.0) + c * e[i]
    return out


def _poly_mul_linear(p: dict, lin: np.ndarray) -> dict:
    out: dict = {}
    for e, c in p.items():
        for j, lj in enumerate(lin):
            if lj != 0.0:
                e2 = e[:j] + (e[j] + 1,) + e[j + 1:]
                out[e2] = out.get(e2, 0.0) + c * lj
    return out


def _poly_add(p: dict, q: dict) -> dict:
    out = dict(p)
    for e, c in q.items():
        out[e] = out.get(e, 0.0) + c
    return out


def _poly_eval(p: dict, z: np.ndarray) -> np.ndarray:
    total = 0.0
    for e, c in p.items():
        term = c * np.ones(z.shape[:-1])
        for j, ej in enumerate(e):
            if ej:
                term = term * z[..., j] ** ej
        total = total + term
    return total


def _derivative_polynomial(minv: np.ndarray, gamma_index: MultiIndex,
                           start: dict | None = None) -> dict:
    """Polynomial P with D_z^gamma (P0 exp(-z.Minv z/4)) = P exp(-z.Minv z/4)."""
    n = minv.shape[0]
    p = {(0,) * n: 1.0} if start is None else start
    for i, order in enumerate(gamma_index):
        lin = -0.5 * minv[i]
        for _ in range(order):
            p = _poly_add(_poly_diff(p, i), _poly_mul_linear(p, lin))
    return p


# -- kernel evaluation --------------------------------------------------------


def _check_points(path: CoefficientPath, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = path.dimension
    if x.shape[-1] != n or y.shape[-1] != n:
        raise ValueError(
            f"points have dimension {x.shape[-1]}/{y.shape[-1]}, path has {n}"
        )
    return x, y


def gamma(path: CoefficientPath, x, y, t: float, s: float):
    """Whole-space kernel value; 0 for t <= s.  Broadcasts over leading axes."""
    x, y = _check_points(path, x, y)
    if t <= s:
        return np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))[()] + 0.0
    n = path.dimension
    m = path.integrate(s, t)
    minv = np.linalg.inv(m)
    norm = (4.0 * math.pi) ** (-n / 2.0) / math.sqrt(np.linalg.det(m))
    z = x - y
    q = np.einsum("...i,ij,...j->...", z, minv, z)
    return norm * np.exp(-0.25 * q)


def gamma_deriv(path: CoefficientPath, alpha: MultiIndex, beta: MultiIndex,
                x, y, t: float, s: float, d_s: bool = False):
    """Exact D_x^alpha D_y^beta (d/ds) Gamma.

    alpha, beta are multi-indices of length n (any order).  With alpha =
    beta = 0 and d_s unset this equals gamma().  The d/ds derivative is
    defined only away from coefficient jumps; at a jump it raises.
    """
    x, y = _check_points(path, x, y)
    n = path.dimension
    alpha = tuple(int(a) for a in alpha)
    beta = tuple(int(b) for b in beta)
    if len(alpha) != n or len(beta) != n:
        raise ValueError("multi-indices must have length n")
    if t <= s:
        return np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))[()] + 0.0
    m = path.integrate(s, t)
    minv = np.linalg.inv(m)
    start = None
    if d_s:
        if any(abs(s - b) <= 1e-12 * max(1.0, abs(b)) for b in path.jumps):
            raise ValueError(
                f"d/ds derivative undefined at coefficient breakpoint s={s}"
            )
        a_s = path.at(s)
        # d/ds Gamma = [tr(M^-1 A)/2 - (z, M^-1 A M^-1 z)/4] Gamma
        quad = -0.25 * (minv @ a_s @ minv)
        start = {(0,) * n: 0.5 * float(np.trace(minv @ a_s))}
        for i in range(n):
            for j in range(n):
                if quad[i, j] != 0.0:
                    e = [0] * n
                    e[i] += 1
                    e[j] += 1
                    e = tuple(e)
                    start[e] = start.get(e, 0.0) + quad[i, j]
    total_index = tuple(a + b for a, b in zip(alpha, beta))
    poly = _derivative_polynomial(minv, total_index, start)
    sign = -1.0 if sum(beta) % 2 else 1.0
    z = x - y
    base = gamma(path, x, y, t, s)
    return sign * _poly_eval(poly, z) * base


def mollified_gamma(path: CoefficientPath, x, y, t: float, s: float, width: float):
    """Kernel applied to a unit-mass Gaussian of std ``width`` centred at y.

    Exact Gaussian convolution: the covariance 2 M(s,t) picks up width^2 I.
    Used as the consistently-mollified reference when comparing against
    solver output seeded with the same bump.
    """
    x, y = _check_points(path, x, y)
    n = path.dimension
    if t <= s:
        return np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))[()] + 0.0
    cov = 2.0 * path.integrate(s, t) + width**2 * np.eye(n)
    cinv = np.linalg.inv(cov)
    norm = (2.0 * math.pi) ** (-n / 2.0) / math.sqrt(np.linalg.det(cov))
    z = x - y
    q = np.einsum("...i,ij,...j->...", z, cinv, z)
    return norm * np.exp(-0.5 * q)


# -- empirical Gaussian-envelope fitting --------------------------------------


class GaussianBoundFit(NamedTuple):
    C_emp: float
    sigma_emp: float
    stable: bool


def _fit_envelope(vals: np.ndarray, u: np.ndarray, tpow: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log|v| + k log(t-s) against |x-y|^2/(t-s),
    then the sup-correction making the bound hold on every sample."""
    mask = np.abs(vals) > 1e-300
    if not mask.any():
        return 0.0, 0.0
    g = np.log(np.abs(vals[mask])) + tpow[mask]
    uu = u[mask]
    if uu.size == 1 or np.ptp(uu) == 0.0:
        sigma = 0.0
    else:
        slope, _ = np.polyfit(uu, g, 1)
        sigma = max(0.0, -float(slope))
    c_emp = float(np.max(np.exp(g + sigma * uu)))
    return c_emp, sigma


def verify_gaussian_bound(path: CoefficientPath, alpha: MultiIndex, beta: MultiIndex,
                          d_s: bool, sample_cloud) -> GaussianBoundFit:
    """Fit (C, sigma) with |D^a D^b Gamma| <= C (t-s)^(-k) exp(-sigma |x-y|^2/(t-s)).

    Here k = (n + |alpha| + |beta| + 2 d_s)/2.  sigma comes from a log-linear
    regression; C is then the exact sup of sample/envelope ratios, so the
    bound holds on the cloud by construction.  Stability compares the fit on
    the first half of the cloud against the full (doubled) cloud.
    """
    cloud = list(sample_cloud)
    if not cloud:
        raise ValueError("empty sample cloud")
    n = path.dimension
    k = (n + sum(alpha) + sum(beta) + (2 if d_s else 0)) / 2.0
    vals, us, tpows = [], [], []
    for (x, y, t, s) in cloud:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        vals.append(float(gamma_deriv(path, alpha, beta, x, y, t, s, d_s=d_s)))
        us.append(float(np.sum((x - y) ** 2)) / (t - s))
        tpows.append(k * math.log(t - s))
    vals = np.array(vals)
    us = np.array(us)
    tpows = np.array(tpows)
    c_full, sigma_full = _fit_envelope(vals, us, tpows)
    half = max(1, len(cloud) // 2)
    c_half, _ = _fit_envelope(vals[:half], us[:half], tpows[:half])
    stable = c_full > 0 and abs(c_full - c_half) <= 0.10 * c_full
    return GaussianBoundFit(c_full, sigma_full, stable)


def sample_kernel(path: CoefficientPath, alpha: MultiIndex, beta: MultiIndex,
                  cloud, d_s: bool = False, kind: str = "") -> list[KernelSample]:
    """Evaluate gamma_deriv on a cloud of (x, y, t, s) and wrap as samples."""
    out = []
    for (x, y, t, s) in cloud:
        v = float(gamma_deriv(path, alpha, beta, np.asarray(x, float),
                              np.asarray(y, float), t, s, d_s=d_s))
        out.append(KernelSample(tuple(x), tuple(y), t, s, tuple(alpha),
                                tuple(beta), d_s, v, kind))
    return out
