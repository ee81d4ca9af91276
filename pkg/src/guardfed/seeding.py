"""Named, order-independent seed streams derived from one master seed."""
from __future__ import annotations

import hashlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master: int, *path) -> int:
    """64-bit seed for ``path`` (e.g. ``("train", round, client)``) under ``master``.

    Streams never depend on how many other streams were drawn before them.
    """
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(_key(p) for p in path))
    lo, hi = seq.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def rng_for(master: int, *path) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *path))
