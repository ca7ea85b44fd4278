"""Deterministic random streams derived from a single 64-bit seed.

Every random draw in the pipeline comes from a substream addressed by a
label path, e.g. ``substream(seed, "plot", 3, "clumps")``. Philox is
counter-based, so a substream's output depends only on its derived key,
never on how much randomness other substreams consumed. This keeps runs
bit-reproducible under any execution order or thread count.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(seed: int, *labels) -> int:
    """128-bit Philox key derived from the seed and a label path."""
    h = hashlib.sha256()
    h.update(struct.pack("<Q", int(seed) & _MASK64))
    for lab in labels:
        h.update(str(lab).encode("utf-8"))
        h.update(b"\x1f")  # separator so ("ab",) != ("a", "b")
    return int.from_bytes(h.digest()[:16], "little")


def substream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for the given seed and label path."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *labels)))
