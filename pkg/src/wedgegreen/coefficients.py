"""Piecewise-constant-in-time symmetric diffusion matrices A(t).

The parabolic operator throughout the package is

    L u = du/dt - sum_ij a_ij(t) D_i D_j u

with a measurable, uniformly elliptic matrix A(t) = {a_ij(t)} that may jump
in time.  We restrict to piecewise-constant paths: that keeps the matrix
integral int_s^t A exact, which removes one error source from every kernel
evaluation downstream, while still exercising the time-discontinuity.

A path stores strictly increasing jump times and one matrix per interval;
the first/last matrix extends to -inf/+inf.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import kvio


class EllipticityError(ValueError):
    """Raised when a coefficient matrix is not symmetric positive definite."""


def _as_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"coefficient piece must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise EllipticityError("coefficient matrix is not symmetric")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class CoefficientPath:
    """t -> A(t), piecewise constant with clamping outside the jump range.

    jumps  : strictly increasing times where A may change (possibly empty)
    pieces : len(jumps) + 1 symmetric matrices; pieces[i] is active on
             [jumps[i-1], jumps[i]), with jumps[-1] = -inf, jumps[len] = +inf
    """

    jumps: tuple[float, ...]
    pieces: tuple[np.ndarray, ...]
    nu: float = field(init=False)

    def __post_init__(self):
        jumps = tuple(float(t) for t in self.jumps)
        pieces = tuple(_as_symmetric(a) for a in self.pieces)
        if len(pieces) != len(jumps) + 1:
            raise ValueError(
                f"need len(jumps)+1 pieces, got {len(pieces)} pieces for {len(jumps)} jumps"
            )
        if any(t1 <= t0 for t0, t1 in zip(jumps, jumps[1:])):
            raise ValueError("jump times must be strictly increasing")
        dims = {a.shape[0] for a in pieces}
        if len(dims) != 1:
            raise ValueError(f"pieces have mismatched dimensions: {sorted(dims)}")
        for a in pieces:
            a.setflags(write=False)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "nu", validate_pieces(pieces))

    @property
    def dimension(self) -> int:
        return self.pieces[0].shape[0]

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.jumps

    @classmethod
    def constant(cls, a: np.ndarray) -> "CoefficientPath":
        return cls(jumps=(), pieces=(np.asarray(a, dtype=float),))

    def at(self, t: float) -> np.ndarray:
        """A(t); intervals are left-closed, so A(jump) is the right piece."""
        return self.pieces[bisect_right(self.jumps, t)]

    def integrate(self, s: float, t: float) -> np.ndarray:
        """Exact int_s^t A(tau) dtau as a symmetric positive definite matrix."""
        if not t > s:
            raise ValueError(f"integration requires s < t, got s={s}, t={t}")
        knots = [s] + [b for b in self.jumps if s < b < t] + [t]
        total = np.zeros_like(self.pieces[0])
        for a, b in zip(knots, knots[1:]):
            total = total + (b - a) * self.at(a)
        return 0.5 * (total + total.T)

    def time_reverse(self) -> "CoefficientPath":
        """The path t -> A(-t): jump times negated and reversed, pieces reversed."""
        return CoefficientPath(
            jumps=tuple(-t for t in reversed(self.jumps)),
            pieces=tuple(reversed(self.pieces)),
        )

    # -- serialization ------------------------------------------------------

    def to_kv(self) -> dict[str, str]:
        # The text form lists K breakpoints with K matrices: piece.k holds on
        # [b_k, b_{k+1}) and the first/last piece extend to -inf/+inf.  The
        # leading breakpoint is only an anchor (nothing jumps there).
        anchor = (self.jumps[0] - 1.0) if self.jumps else 0.0
        bps = (anchor,) + self.jumps
        out = {
            "n": str(self.dimension),
            "breakpoints": kvio.fmt_floats(bps),
        }
        for k, a in enumerate(self.pieces):
            out[f"piece.{k}"] = kvio.fmt_floats(a.reshape(-1))
        return out

    @classmethod
    def from_kv(cls, entries: dict[str, str]) -> "CoefficientPath":
        n = int(entries["n"])
        bps = [float(v) for v in entries["breakpoints"].split(",") if v]
        pieces = []
        k = 0
        while f"piece.{k}" in entries:
            vals = [float(v) for v in entries[f"piece.{k}"].split(",")]
            if len(vals) != n * n:
                raise ValueError(f"piece.{k} has {len(vals)} entries, expected {n * n}")
            pieces.append(np.array(vals).reshape(n, n))
            k += 1
        if not pieces:
            raise ValueError("no coefficient pieces found")
        if len(bps) == len(pieces):
            jumps = tuple(bps[1:])  # leading breakpoint is the anchor
        elif len(bps) == len(pieces) - 1:
            jumps = tuple(bps)
        else:
            raise ValueError(
                f"{len(bps)} breakpoints incompatible with {len(pieces)} pieces"
            )
        return cls(jumps=jumps, pieces=tuple(pieces))

    def save(self, path) -> None:
        kvio.write_kv(path, self.to_kv())

    @classmethod
    def load(cls, path) -> "CoefficientPath":
        return cls.from_kv(kvio.read_kv(path))


def validate_pieces(pieces) -> float:
    """Largest nu with nu|xi|^2 <= A xi.xi <= |xi|^2/nu for every piece."""
    nu = np.inf
    for a in pieces:
        w = np.linalg.eigvalsh(np.asarray(a, dtype=float))
        lo, hi = float(w[0]), float(w[-1])
        if lo <= 0.0:
            raise EllipticityError(f"piece not elliptic: smallest eigenvalue {lo}")
        nu = min(nu, lo, 1.0 / hi)
    return nu


def validate(path: CoefficientPath) -> float:
    """Ellipticity constant of the whole path (min over pieces)."""
    return validate_pieces(path.pieces)
