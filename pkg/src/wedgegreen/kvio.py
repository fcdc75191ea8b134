"""Plain-text key-value config format and CSV emission helpers.

Every on-disk artifact of this package is either a ``key=value`` text file
or a CSV whose leading ``#`` lines carry provenance (config hash, seed).
Keys may repeat structure through dots (``piece.0``, ``sector.theta0``).
Entries may be separated by newlines or whitespace; ``#`` starts a comment.
"""

from __future__ import annotations

import hashlib
from pathlib import Path


def parse_kv(text: str) -> dict[str, str]:
    """Parse key-value text into an ordered dict of strings."""
    out: dict[str, str] = {}
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        for token in line.split():
            if "=" not in token:
                raise ValueError(f"malformed key-value token: {token!r}")
            key, value = token.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def read_kv(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return parse_kv(path.read_text())


def format_kv(entries: dict[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in entries.items())


def write_kv(path: str | Path, entries: dict[str, str]) -> None:
    Path(path).write_text(format_kv(entries))


def fmt_float(x: float) -> str:
    """Shortest round-trip decimal form; deterministic across runs."""
    return repr(float(x))


def fmt_floats(xs) -> str:
    return ",".join(fmt_float(x) for x in xs)


def config_hash(entries: dict[str, str]) -> str:
    """sha256 over the canonical (sorted) key=value rendering."""
    canon = "".join(f"{k}={entries[k]}\n" for k in sorted(entries))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def csv_header_lines(meta: dict[str, str]) -> list[str]:
    return [f"# {k}={v}" for k, v in meta.items()]


def write_csv(path: str | Path, columns: list[str], rows, meta: dict[str, str]) -> None:
    """Write rows of floats/strings with provenance comment lines on top."""
    lines = csv_header_lines(meta)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
