"""Reproducible random number streams.

All randomness in this package flows through Philox4x64-10, a 64-bit
counter-based generator.  Streams are split explicitly by a (seed,
stream) pair, so parallel trials produce identical results regardless
of scheduling, platform, or execution order.
"""

from __future__ import annotations

import numpy as np

#: Identifier written into run manifests.
GENERATOR_ID = "philox4x64-10"

# Reserved stream ids. Trial-level streams start at STREAM_TRIAL_BASE + index.
STREAM_INSTANCE = 0
STREAM_ALGORITHM = 1
STREAM_CODEBOOK = 2
STREAM_COMPLETION = 3
STREAM_TRIAL_BASE = 1000


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Return the generator for a (seed, stream) pair.

    The pair is the Philox key, so distinct streams are statistically
    independent and any stream can be reconstructed in isolation.
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return np.random.Generator(np.random.Philox(key=[np.uint64(seed), np.uint64(stream)]))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Generator for one Monte Carlo trial, independent of all others."""
    return rng_stream(seed, STREAM_TRIAL_BASE + trial)
