"""Deterministic random streams keyed by (seed, purpose, i, j).

Every randomized stage derives its own Philox generator from an injective
packing of the master seed and a stream coordinate:

    key word 0 = master_seed mod 2**64
    key word 1 = purpose << 60 | i << 30 | j      (i, j < 2**30, purpose < 16)

Distinct tuples map to distinct Philox keys, and Philox-4x64-10 (a fixed,
published counter-based generator) produces statistically independent
streams for distinct keys. This is what makes block-parallel generation
reproducible: any worker can regenerate any block's stream from the tuple
alone, regardless of scheduling.
"""

from __future__ import annotations

import numpy as np

PURPOSE_BLOCK = 0
PURPOSE_GAUSSIAN = 1
PURPOSE_SKETCH = 2
PURPOSE_SYNTH = 3

_COORD_BITS = 30
_COORD_LIMIT = 1 << _COORD_BITS
_MASK64 = (1 << 64) - 1


def philox_stream(master_seed: int, purpose: int, i: int = 0, j: int = 0) -> np.random.Generator:
    """Return the generator for stream coordinate (purpose, i, j)."""
    if not 0 <= purpose < 16:
        raise ValueError(f"purpose {purpose} out of range [0, 16)")
    if not (0 <= i < _COORD_LIMIT and 0 <= j < _COORD_LIMIT):
        raise ValueError(f"stream coordinate ({i}, {j}) exceeds 2**{_COORD_BITS} - 1")
    key = np.array(
        [master_seed & _MASK64, (purpose << 60) | (i << _COORD_BITS) | j],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
