"""Seeded random-walk paths.

A path is the sequence of pairs ``(xi_k, eta_k)``, ``k >= 1``, with prefix sums
``S_k`` and ``T_k`` (``S_0 = T_0 = 0``).  Pairs are generated in blocks of
``BLOCK_SIZE``; block ``q`` of path ``(seed, index)`` is a pure function of
those three numbers, so paths replay identically in any process.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .models import PairModel, sample_block
from .rng import BLOCK_SIZE


class HorizonTooSmall(ValueError):
    """The walk has not yet passed the requested level at the horizon."""


class PathExhausted(RuntimeError):
    """A finite path ran out of steps."""


@dataclass(frozen=True)
class Block:
    """Steps ``start+1 .. start+len(xi)`` of a path.

    ``S[i]`` is ``S_{start+i+1}`` and ``T[i]`` is ``T_{start+i+1}``;
    ``s_prev`` and ``t_prev`` are ``S_start`` and ``T_start``.  ``T`` and
    ``t_prev`` are None when the blocks were requested without partial sums
    of eta.
    """

    index: int
    start: int
    xi: np.ndarray
    eta: np.ndarray
    S: np.ndarray
    T: np.ndarray | None
    s_prev: float
    t_prev: float | None

    def __len__(self) -> int:
        return len(self.xi)

    @property
    def S_before(self) -> np.ndarray:
        """``S_{start} .. S_{start+n-1}``: the walk value paired with each eta."""
        out = np.empty(len(self.S))
        out[0] = self.s_prev
        out[1:] = self.S[:-1]
        return out


def _prefix(values: np.ndarray, carry: float) -> np.ndarray:
    # sequential left-to-right sum, matching one-step-at-a-time accumulation
    return np.cumsum(np.concatenate(([carry], values)))[1:]


class PathStream:
    """Lazy, replayable path of a pair model.

    ``next_step`` walks one pair at a time; ``blocks`` yields whole blocks from
    the start of the path and does not touch the cursor.
    """

    def __init__(self, model: PairModel, master_seed: int, path_index: int = 0):
        if path_index < 0:
            raise ValueError("path_index must be nonnegative")
        self.model = model
        self.master_seed = int(master_seed)
        self.path_index = int(path_index)
        self.cursor = 0
        self.S = 0.0
        self.T = 0.0

    @property
    def mu(self) -> float:
        return self.model.mu

    @property
    def m(self) -> float:
        return self.model.m

    @property
    def eta_abs_mean(self) -> float:
        return self.model.eta_abs_mean

    def raw_block(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        return sample_block(self.model, self.master_seed, self.path_index, q)

    def next_step(self) -> tuple[float, float, float, float]:
        q, i = divmod(self.cursor, BLOCK_SIZE)
        xi, eta = self.raw_block(q)
        x, e = float(xi[i]), float(eta[i])
        self.cursor += 1
        self.S += x
        self.T += e
        return x, e, self.S, self.T

    def reset(self) -> None:
        self.cursor = 0
        self.S = 0.0
        self.T = 0.0

    def blocks(self, with_T: bool = True) -> Iterator[Block]:
        return _iter_blocks((self.raw_block(q) for q in itertools.count()), with_T)

    def prefix(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """First ``n`` pairs and their prefix sums ``S_1..S_n``, ``T_1..T_n``."""
        return _collect(self.blocks(), n)


class FixedPath:
    """A finite, explicitly given path with the same block interface.

    ``mu``, ``m`` and ``eta_abs_mean`` describe the law the path is meant to
    represent; they default to the empirical values of the given steps.
    """

    def __init__(self, xi, eta, *, mu: float | None = None, m: float | None = None,
                 eta_abs_mean: float | None = None):
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        if xi.shape != eta.shape or xi.ndim != 1 or len(xi) == 0:
            raise ValueError("xi and eta must be nonempty 1-d arrays of equal length")
        self.xi = xi
        self.eta = eta
        self.mu = float(np.mean(xi)) if mu is None else float(mu)
        self.m = float(np.mean(eta)) if m is None else float(m)
        self.eta_abs_mean = float(np.mean(np.abs(eta))) if eta_abs_mean is None else float(eta_abs_mean)
        self.cursor = 0
        self.S = 0.0
        self.T = 0.0

    def __len__(self) -> int:
        return len(self.xi)

    def next_step(self) -> tuple[float, float, float, float]:
        if self.cursor >= len(self.xi):
            raise PathExhausted(f"fixed path has only {len(self.xi)} steps")
        x, e = float(self.xi[self.cursor]), float(self.eta[self.cursor])
        self.cursor += 1
        self.S += x
        self.T += e
        return x, e, self.S, self.T

    def blocks(self, with_T: bool = True) -> Iterator[Block]:
        raw = ((self.xi[a:a + BLOCK_SIZE], self.eta[a:a + BLOCK_SIZE]) for a in range(0, len(self.xi), BLOCK_SIZE))
        return _iter_blocks(raw, with_T)

    def prefix(self, n: int):
        return _collect(self.blocks(), n)


def _iter_blocks(raw, with_T: bool) -> Iterator[Block]:
    s = 0.0
    t = 0.0 if with_T else None
    start = 0
    for q, (xi, eta) in enumerate(raw):
        S = _prefix(xi, s)
        T = _prefix(eta, t) if with_T else None
        yield Block(q, start, xi, eta, S, T, s, t)
        start += len(xi)
        s = float(S[-1])
        if with_T:
            t = float(T[-1])


def _collect(blocks: Iterator[Block], n: int):
    parts: list[Block] = []
    have = 0
    for blk in blocks:
        if have >= n:
            break
        parts.append(blk)
        have += len(blk)
    if have < n:
        raise PathExhausted(f"path has only {have} steps, {n} requested")
    cat = [np.concatenate([getattr(b, f) for b in parts])[:n] for f in ("xi", "eta", "S", "T")]
    return tuple(cat)


def next_step(stream) -> tuple[float, float, float, float]:
    """Advance ``stream`` by one pair; returns ``(xi_k, eta_k, S_k, T_k)``."""
    return stream.next_step()


def renewal_count(stream, x: float, horizon: int | None = None) -> int:
    """``#{0 <= n <= horizon : S_n <= x}`` along the path of ``stream``.

    The default horizon is ``ceil(4x/mu) + 10**4``.  Raises
    :class:`HorizonTooSmall` if ``S_horizon <= x``.
    """
    if horizon is None:
        horizon = math.ceil(4.0 * max(x, 0.0) / stream.mu) + 10_000
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    count = 1 if 0.0 <= x else 0
    last = 0.0
    done = 0
    for blk in stream.blocks(with_T=False):
        if done >= horizon:
            break
        take = min(len(blk), horizon - done)
        S = blk.S[:take]
        count += int(np.count_nonzero(S <= x))
        last = float(S[-1])
        done += take
    if done < horizon:
        raise PathExhausted(f"path has only {done} steps, horizon {horizon} requested")
    if last <= x:
        raise HorizonTooSmall(f"S_{horizon} = {last!r} <= x = {x!r}; increase the horizon")
    return count
