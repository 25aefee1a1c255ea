"""Named substreams derived from one root seed.

Every random consumer gets its own stream keyed by (root, labels...), so
adding trials or commands never perturbs existing draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_entropy(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def substream(root_seed: int, *path) -> np.random.Generator:
    """Generator for the substream named by ``path`` under ``root_seed``."""
    entropy = [_as_entropy(root_seed)] + [_as_entropy(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def stream_label(root_seed: int, *path) -> str:
    """Human-readable substream identifier for traces and reports."""
    return ":".join(str(p) for p in (root_seed, *path))
