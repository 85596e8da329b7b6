"""Named random streams derived from a single integer seed."""

import zlib

import numpy as np


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the stream ``name`` under ``seed``.

    The name is hashed with CRC32 so the mapping is stable across processes
    and Python versions (unlike ``hash``).
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
