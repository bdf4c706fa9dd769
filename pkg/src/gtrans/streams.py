"""Named, splittable random streams.

A stream is identified by a root seed plus a tuple of small integers, so
any replicate can be regenerated on its own without replaying the others.
"""

from __future__ import annotations

import numpy as np

# Stream tags, kept stable so stored seeds stay reproducible.
TARGET = 1
SOURCE = 2
MASK = 3
FOLDS = 4
TARGET_NOISE = 5
SOURCE_NOISE = 6


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream ``keys`` under root ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))))
