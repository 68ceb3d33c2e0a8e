"""Reproducible random numbers built on the Philox counter-based generator.

Monte Carlo noise must not depend on how samples are grouped into
batches or spread over workers. Each logical stream is a Philox
generator keyed by (seed, stream id); within a stream, sample i owns a
fixed-size block of counter words, and Gaussian variates are produced
by Box-Muller from raw uniforms so the word consumption per sample is
exact. Any batch partition therefore reproduces the same noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

# Distinct purposes get distinct high bits in the stream id so that
# e.g. certification noise for input 3 can never collide with training
# noise for epoch 3 under the same seed.
DOMAIN_CERTIFY = 0
DOMAIN_TRAIN_NOISE = 1
DOMAIN_INIT = 2
DOMAIN_DATA = 3
DOMAIN_SHUFFLE = 4

_PHILOX_WORDS_PER_ADVANCE = 4  # numpy's Philox.advance skips 4 64-bit words


def stream_id(domain: int, index: int) -> int:
    if not 0 <= index < 1 << 56:
        raise ValueError(f"stream index out of range: {index}")
    return (domain << 56) | index


def _key(seed: int, stream: int) -> np.ndarray:
    return np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)


def generator(seed: int, domain: int, index: int = 0) -> Generator:
    """Sequential-use generator (shuffles, init); no counter guarantees."""
    return Generator(Philox(key=_key(seed, stream_id(domain, index))))


@dataclass(frozen=True)
class NoiseStream:
    """Counter-addressable stream of i.i.d. standard normal samples.

    `normal(start, count, shape)` returns samples start .. start+count-1
    of the stream, each of the given shape, independent of how calls are
    batched.
    """

    seed: int
    stream: int

    def _words_per_sample(self, numel: int) -> int:
        # Box-Muller consumes uniforms in pairs; blocks are rounded up to
        # the 4-word advance granularity of Philox.
        blocks = (numel + _PHILOX_WORDS_PER_ADVANCE - 1) // _PHILOX_WORDS_PER_ADVANCE
        return blocks * _PHILOX_WORDS_PER_ADVANCE

    def normal(self, start: int, count: int, shape: tuple[int, ...]) -> np.ndarray:
        if count < 0 or start < 0:
            raise ValueError("start and count must be nonnegative")
        numel = int(np.prod(shape)) if shape else 1
        out_shape = (count, *shape)
        if count == 0 or numel == 0:
            return np.zeros(out_shape)
        words = self._words_per_sample(numel)
        bitgen = Philox(key=_key(self.seed, self.stream))
        bitgen.advance(start * words // _PHILOX_WORDS_PER_ADVANCE)
        u = Generator(bitgen).random((count, words))
        # log1p(-u) maps [0,1) to (0,1] before the log, avoiding log(0).
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0::2]))
        theta = (2.0 * math.pi) * u[:, 1::2]
        z = np.empty((count, words))
        z[:, 0::2] = r * np.cos(theta)
        z[:, 1::2] = r * np.sin(theta)
        return z[:, :numel].reshape(out_shape)


def noise_stream(seed: int, domain: int, index: int) -> NoiseStream:
    return NoiseStream(seed=seed, stream=stream_id(domain, index))
