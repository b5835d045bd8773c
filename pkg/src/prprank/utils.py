from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from collections.abc import Sequence
from typing import Any


def setup_logger(name: str = __name__):
    logger = logging.getLogger(name)
    logger.setLevel(os.getenv("PRPRANK_LOG_LEVEL", "WARNING").upper())
    if not logger.handlers:
        logger.addHandler(logging.StreamHandler())
    return logger


def canonical_json(value: Any) -> str:
    """Serialize with sorted keys and no whitespace so equal values hash equally."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fingerprint(value: Any) -> str:
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def derive_seed(*parts: Any) -> int:
    """Derive a 64-bit seed from an ordered tuple of parts.

    The same parts always give the same seed, independent of call order or thread.
    """
    digest = hashlib.blake2b(digest_size=8)
    for part in parts:
        digest.update(str(part).encode("utf-8"))
        digest.update(b"\x1f")
    return int.from_bytes(digest.digest(), "big")


def get_path(document: Any, path: str) -> Any:
    """Resolve a dotted path such as ``choices.0.text`` inside parsed JSON."""
    current = document
    for part in path.split("."):
        if isinstance(current, list):
            try:
                current = current[int(part)]
            except (ValueError, IndexError) as e:
                raise KeyError(path) from e
        elif isinstance(current, dict):
            if part not in current:
                raise KeyError(path)
            current = current[part]
        else:
            raise KeyError(path)
    return current


def nearest_rank(values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile; 0.0 for an empty sequence."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return ordered[min(rank, len(ordered)) - 1]
