"""Deterministic random substreams.

All randomness in the package flows from a single 64-bit seed through
counter-based Philox streams, so datasets and sampling patterns are
reproducible across platforms and independent of evaluation order.

Stream-splitting scheme: the Philox4x64 key is ``(seed, 0)`` and the
128..255 bits of the start counter encode ``(kind, index)``:

    counter = [0, 0, kind, index]

``kind`` is one of the STREAM_* constants below; ``index`` packs the
entities the stream belongs to:

    per-camera streams   index = camera_id
    per-pair streams     index = (outer_iter << 40) | (i << 20) | j
    per-triplet streams  index = (outer_iter << 48) | (i << 32) | (j << 16) | k

Draw order within a stream is documented at each call site.
"""

import numpy as np

STREAM_EXTRINSIC_PERTURB = 0
STREAM_DEPTH_NOISE = 1
STREAM_DROPOUT = 2
STREAM_GEO_SAMPLING = 3
STREAM_CYCLE_SAMPLING = 4

_MASK64 = (1 << 64) - 1


def substream(seed: int, kind: int, index: int = 0) -> np.random.Generator:
    """Return the generator for one named substream of ``seed``."""
    bitgen = np.random.Philox(
        counter=[0, 0, kind & _MASK64, index & _MASK64],
        key=[seed & _MASK64, 0],
    )
    return np.random.Generator(bitgen)


def pair_index(outer_iter: int, i: int, j: int) -> int:
    return (outer_iter << 40) | (i << 20) | j


def triplet_index(outer_iter: int, i: int, j: int, k: int) -> int:
    return (outer_iter << 48) | (i << 32) | (j << 16) | k
