"""Small shared helpers: stable hashing, seed derivation, float formatting."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any


def canonical_json(obj: Any) -> str:
    """Serialize to a canonical JSON string (sorted keys, no whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj: Any) -> str:
    """Short hex digest identifying a configuration dictionary."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def file_sha256(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def combined_hash(parts: list[str]) -> str:
    """Hash of an ordered list of hex digests / strings."""
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()[:16]


def stable_seed_words(*parts: object) -> list[int]:
    """Derive SeedSequence entropy words from arbitrary string/int parts.

    Uses SHA-256, not Python's hash(), so results do not depend on
    PYTHONHASHSEED and are identical across processes and platforms.
    """
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    digest = h.digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def round_sig(x: float, digits: int = 9) -> float:
    """Round to a fixed number of significant digits; passes through non-finite."""
    if x is None or not math.isfinite(x):
        return x
    return float(f"{x:.{digits}g}")


def fmt_sig(x: float, digits: int = 9) -> str:
    """Format with a fixed number of significant digits for report files."""
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.{digits}g}"
