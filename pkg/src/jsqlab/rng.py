"""Reproducible random streams.

All randomness in the package flows through keyed Philox generators: a
counter-based, seekable bit generator where (seed, stream) selects an
independent stream.  Replica r of any Monte Carlo experiment uses stream
(seed, r), so replicas are reproducible and safely parallel.

Draws are consumed in blocks; the Philox byte stream is invariant under
re-blocking, so chunk sizes never affect results.
"""

from __future__ import annotations

import numpy as np

__all__ = ["philox_stream"]


def philox_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator on the independent Philox stream keyed by (seed, stream)."""
    if not (0 <= seed < 2**64):
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if not (0 <= stream < 2**64):
        raise ValueError(f"stream must be a 64-bit unsigned integer, got {stream}")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
