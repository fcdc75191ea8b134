"""Kernel evaluation records and their CSV schema.

A sample is one evaluation of some kernel (whole-space, Dirichlet, oblique,
or a difference of kernels), tagged with the derivative multi-indices it
carries.  Clouds of samples feed the envelope-fitting machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kvio

MultiIndex = tuple[int, ...]


def fmt_multi_index(alpha: MultiIndex) -> str:
    return "-".join(str(int(a)) for a in alpha)


def parse_multi_index(text: str) -> MultiIndex:
    return tuple(int(v) for v in text.split("-"))


@dataclass(frozen=True)
class KernelSample:
    """One kernel evaluation D_x^alpha D_y^beta (d_s) K(x,y;t,s) = value."""

    x: tuple[float, ...]
    y: tuple[float, ...]
    t: float
    s: float
    alpha: MultiIndex
    beta: MultiIndex
    d_s: bool
    value: float
    kind: str = ""

    def __post_init__(self):
        if not self.t > self.s:
            raise ValueError(f"sample requires t > s, got t={self.t}, s={self.s}")
        if not np.isfinite(self.value):
            raise ValueError(f"sample value must be finite, got {self.value}")

    @property
    def dimension(self) -> int:
        return len(self.x)


def csv_columns(n: int, with_kind: bool = False) -> list[str]:
    cols = [f"x{i + 1}" for i in range(n)]
    cols += [f"y{i + 1}" for i in range(n)]
    cols += ["t", "s", "alpha", "beta", "ds", "value"]
    if with_kind:
        cols.append("kind")
    return cols


def write_samples(path, samples, meta: dict[str, str]) -> None:
    samples = list(samples)
    if not samples:
        raise ValueError("refusing to write an empty sample cloud")
    n = samples[0].dimension
    with_kind = any(s.kind for s in samples)
    rows = []
    for s in samples:
        row = [*s.x, *s.y, s.t, s.s, fmt_multi_index(s.alpha), fmt_multi_index(s.beta),
               "1" if s.d_s else "0", s.value]
        if with_kind:
            row.append(s.kind)
        rows.append(row)
    kvio.write_csv(path, csv_columns(n, with_kind), rows, meta)


def read_samples(path) -> list[KernelSample]:
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    header = lines[0].split(",")
    n = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
    with_kind = "kind" in header
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        x = tuple(float(v) for v in parts[:n])
        y = tuple(float(v) for v in parts[n:2 * n])
        t, s = float(parts[2 * n]), float(parts[2 * n + 1])
        alpha = parse_multi_index(parts[2 * n + 2])
        beta = parse_multi_index(parts[2 * n + 3])
        d_s = parts[2 * n + 4] == "1"
        value = float(parts[2 * n + 5])
        kind = parts[2 * n + 6] if with_kind else ""
        out.append(KernelSample(x, y, t, s, alpha, beta, d_s, value, kind))
    return out
