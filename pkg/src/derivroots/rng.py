"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *stream_ids)``, so a
draw depends only on its key and never on scheduling.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def name_id(name):
    """Stable 32-bit integer id for a string (first 4 bytes of sha256)."""
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


def _key(x):
    if isinstance(x, str):
        return name_id(x)
    return int(x) & MASK64


def stream(seed, *ids):
    """Independent generator for the stream ``(seed, *ids)``."""
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(_key(i) for i in ids))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *ids):
    """64-bit child seed for ``(seed, *ids)``; used to key trials."""
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(_key(i) for i in ids))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
