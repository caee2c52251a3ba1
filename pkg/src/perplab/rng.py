"""Addressable random streams.

A stream ``(seed, stream)`` is cut into fixed-size blocks.  Block ``q`` is
drawn from an SFC64 generator seeded by hashing ``(seed, stream, q, domain)``
through :class:`numpy.random.SeedSequence`, so any block can be regenerated
without replaying the ones before it and results never depend on execution
order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

BLOCK_SIZE = 32768

_MASK64 = (1 << 64) - 1

# the domain word separates independent uses of the same (seed, stream) key
DOMAIN_WALK = 0
DOMAIN_LIMIT_INTEGRAL = 1
DOMAIN_LIMIT_CHOLESKY = 2


def block_generator(seed: int, stream: int, block: int, domain: int = DOMAIN_WALK) -> np.random.Generator:
    """Generator for block ``block`` of stream ``(seed, stream)``."""
    if block < 0 or stream < 0:
        raise ValueError("stream and block indices must be nonnegative")
    entropy = [seed & _MASK64, stream & _MASK64, block & _MASK64, domain & _MASK64]
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class RngState:
    """Position ``counter`` inside stream ``(seed, stream)``.

    Immutable; consumers return an advanced copy instead of mutating.
    """

    seed: int
    stream: int = 0
    counter: int = 0

    @property
    def block(self) -> int:
        return self.counter // BLOCK_SIZE

    @property
    def offset(self) -> int:
        return self.counter % BLOCK_SIZE

    def advanced(self, n: int = 1) -> "RngState":
        return replace(self, counter=self.counter + n)
