"""Joint laws of the step pair (xi, eta).

A :class:`PairModel` couples a walk increment ``xi`` with a reward ``eta``.
Four families are supported: a point mass, an independent product of two
marginals, a linear coupling ``eta = a*xi + c + noise`` and a finite table of
weighted atoms.  All moments are closed form and stored at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .rng import BLOCK_SIZE, RngState, block_generator

MARGINAL_KINDS = ("point", "normal", "exponential", "two-point", "uniform")
MODEL_KINDS = ("degenerate", "independent-product", "linear-coupled", "user-table")


def _normal_abs_mean(mean: float, sd: float) -> float:
    if sd == 0.0:
        return abs(mean)
    z = mean / sd
    return sd * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * z * z) + mean * math.erf(z / math.sqrt(2.0))


@dataclass(frozen=True)
class Marginal:
    """One-dimensional distribution with closed-form moments.

    Parameters per kind: ``point (c)``, ``normal (mean, sd)``,
    ``exponential (rate)``, ``two-point (x1, x2, p)`` with ``P(x1) = p``,
    ``uniform (lo, hi)``.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in MARGINAL_KINDS:
            raise ValueError(f"unknown marginal kind {self.kind!r}; expected one of {MARGINAL_KINDS}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        arity = {"point": 1, "normal": 2, "exponential": 1, "two-point": 3, "uniform": 2}[self.kind]
        if len(self.params) != arity:
            raise ValueError(f"{self.kind} marginal takes {arity} parameter(s), got {len(self.params)}")
        if not all(math.isfinite(p) for p in self.params):
            raise ValueError(f"{self.kind} marginal parameters must be finite")
        p = self.params
        if self.kind == "normal" and p[1] < 0:
            raise ValueError("normal sd must be nonnegative")
        if self.kind == "exponential" and p[0] <= 0:
            raise ValueError("exponential rate must be positive")
        if self.kind == "two-point" and not 0.0 <= p[2] <= 1.0:
            raise ValueError("two-point probability must lie in [0, 1]")
        if self.kind == "uniform" and not p[0] < p[1]:
            raise ValueError("uniform needs lo < hi")

    @classmethod
    def point(cls, c: float) -> "Marginal":
        return cls("point", (c,))

    @classmethod
    def normal(cls, mean: float = 0.0, sd: float = 1.0) -> "Marginal":
        return cls("normal", (mean, sd))

    @classmethod
    def exponential(cls, rate: float = 1.0) -> "Marginal":
        return cls("exponential", (rate,))

    @classmethod
    def two_point(cls, x1: float, x2: float, p: float) -> "Marginal":
        return cls("two-point", (x1, x2, p))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "Marginal":
        return cls("uniform", (lo, hi))

    @property
    def is_point(self) -> bool:
        return self.kind == "point"

    @property
    def mean(self) -> float:
        p = self.params
        if self.kind == "point":
            return p[0]
        if self.kind == "normal":
            return p[0]
        if self.kind == "exponential":
            return 1.0 / p[0]
        if self.kind == "two-point":
            return p[2] * p[0] + (1.0 - p[2]) * p[1]
        return 0.5 * (p[0] + p[1])

    @property
    def var(self) -> float:
        p = self.params
        if self.kind == "point":
            return 0.0
        if self.kind == "normal":
            return p[1] ** 2
        if self.kind == "exponential":
            return 1.0 / p[0] ** 2
        if self.kind == "two-point":
            return p[2] * (1.0 - p[2]) * (p[0] - p[1]) ** 2
        return (p[1] - p[0]) ** 2 / 12.0

    @property
    def abs_mean(self) -> float:
        """E|X|."""
        p = self.params
        if self.kind == "point":
            return abs(p[0])
        if self.kind == "normal":
            return _normal_abs_mean(p[0], p[1])
        if self.kind == "exponential":
            return 1.0 / p[0]
        if self.kind == "two-point":
            return p[2] * abs(p[0]) + (1.0 - p[2]) * abs(p[1])
        lo, hi = p
        if lo >= 0.0 or hi <= 0.0:
            return abs(0.5 * (lo + hi))
        return (lo * lo + hi * hi) / (2.0 * (hi - lo))

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.kind == "point":
            return np.full(n, p[0])
        if self.kind == "normal":
            return p[0] + p[1] * gen.standard_normal(n)
        if self.kind == "exponential":
            return gen.standard_exponential(n) / p[0]
        if self.kind == "two-point":
            return np.where(gen.random(n) < p[2], p[0], p[1])
        return gen.uniform(p[0], p[1], n)


@dataclass(frozen=True)
class PairModel:
    """Joint law of ``(xi, eta)``; use the classmethod constructors.

    ``eta_abs_mean`` is E|eta| for every family except linear-coupled, where
    it is the upper bound ``|a| E|xi| + |c| + E|noise|``.  It only feeds the
    truncation certificate, for which an upper bound is what is needed.
    """

    kind: str
    xi: Marginal
    eta: Marginal | None = None
    coupling: tuple[float, float] = (0.0, 0.0)
    noise: Marginal | None = None
    table: tuple[tuple[float, float, float], ...] = ()

    mu: float = field(init=False)
    m: float = field(init=False)
    sigma2: float = field(init=False)
    s2: float = field(init=False)
    gamma: float = field(init=False)
    eta_abs_mean: float = field(init=False)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.kind == "user-table":
            mu, m, sigma2, s2, gamma, eabs = _table_moments(self.table)
        elif self.kind == "linear-coupled":
            a, c = self.coupling
            if self.noise is None:
                object.__setattr__(self, "noise", Marginal.point(0.0))
            noise = self.noise
            mu = self.xi.mean
            sigma2 = self.xi.var
            m = a * mu + c + noise.mean
            s2 = a * a * sigma2 + noise.var
            gamma = a * sigma2
            eabs = abs(a) * self.xi.abs_mean + abs(c) + noise.abs_mean
        else:
            if self.eta is None:
                raise ValueError(f"{self.kind} model needs an eta marginal")
            if self.kind == "degenerate" and not (self.xi.is_point and self.eta.is_point):
                raise ValueError("degenerate model needs point marginals")
            mu, m = self.xi.mean, self.eta.mean
            sigma2, s2 = self.xi.var, self.eta.var
            gamma = 0.0
            eabs = self.eta.abs_mean
        if not mu > 0.0:
            raise ValueError(f"step mean must be positive, got mu={mu!r}")
        for name, value in (("mu", mu), ("m", m), ("sigma2", sigma2), ("s2", s2), ("gamma", gamma), ("eta_abs_mean", eabs)):
            object.__setattr__(self, name, float(value))

    @classmethod
    def degenerate(cls, xi: float, eta: float) -> "PairModel":
        return cls("degenerate", Marginal.point(xi), Marginal.point(eta))

    @classmethod
    def independent(cls, xi: Marginal, eta: Marginal) -> "PairModel":
        return cls("independent-product", xi, eta)

    @classmethod
    def linear_coupled(cls, xi: Marginal, a: float, c: float, noise: Marginal | None = None) -> "PairModel":
        """``eta = a*xi + c + noise`` with ``noise`` independent of ``xi``."""
        return cls("linear-coupled", xi, coupling=(float(a), float(c)), noise=noise or Marginal.point(0.0))

    @classmethod
    def user_table(cls, rows) -> "PairModel":
        """Finite law from ``(xi, eta, probability)`` rows."""
        rows = tuple(tuple(float(v) for v in row) for row in rows)
        return cls("user-table", Marginal.point(0.0), table=rows)

    @property
    def params(self) -> tuple[float, ...]:
        """Flat parameter list identifying the model within its family."""
        if self.kind == "user-table":
            return tuple(v for row in self.table for v in row)
        if self.kind == "linear-coupled":
            return self.xi.params + self.coupling + self.noise.params
        return self.xi.params + self.eta.params

    def moments(self) -> tuple[float, float, float, float, float]:
        return moments(self)

    def sample_block(self, gen: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` pairs; the order of generator calls is fixed per family."""
        if self.kind == "user-table":
            arr = np.asarray(self.table)
            idx = gen.choice(len(arr), size=n, p=arr[:, 2])
            return arr[idx, 0].copy(), arr[idx, 1].copy()
        xi = self.xi.sample(gen, n)
        if self.kind == "linear-coupled":
            a, c = self.coupling
            eta = a * xi + c
            if not self.noise.is_point or self.noise.params[0] != 0.0:
                eta = eta + self.noise.sample(gen, n)
            return xi, eta
        return xi, self.eta.sample(gen, n)


def _table_moments(rows):
    if not rows:
        raise ValueError("user table needs at least one row")
    for row in rows:
        if len(row) != 3:
            raise ValueError("table rows are (xi, eta, probability)")
        if not all(math.isfinite(v) for v in row) or row[2] < 0.0:
            raise ValueError(f"bad table row {row!r}")
    total = math.fsum(r[2] for r in rows)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"table probabilities sum to {total!r}, not 1")
    ex = math.fsum(p * x for x, _, p in rows)
    ey = math.fsum(p * y for _, y, p in rows)
    vx = math.fsum(p * (x - ex) ** 2 for x, _, p in rows)
    vy = math.fsum(p * (y - ey) ** 2 for _, y, p in rows)
    cxy = math.fsum(p * (x - ex) * (y - ey) for x, y, p in rows)
    eabs = math.fsum(p * abs(y) for _, y, p in rows)
    return ex, ey, vx, vy, cxy, eabs


def moments(model: PairModel) -> tuple[float, float, float, float, float]:
    """``(mu, m, sigma2, s2, gamma)``: E xi, E eta, Var xi, Var eta, Cov(xi, eta)."""
    return (model.mu, model.m, model.sigma2, model.s2, model.gamma)


@lru_cache(maxsize=32)
def _block(model: PairModel, seed: int, stream: int, block: int):
    xi, eta = model.sample_block(block_generator(seed, stream, block), BLOCK_SIZE)
    xi.flags.writeable = False
    eta.flags.writeable = False
    return xi, eta


def sample_block(model: PairModel, seed: int, stream: int, block: int) -> tuple[np.ndarray, np.ndarray]:
    """Block ``block`` of the pair stream ``(seed, stream)``; read-only arrays."""
    return _block(model, seed, stream, block)


def sample_pair(model: PairModel, state: RngState) -> tuple[tuple[float, float], RngState]:
    """Pair number ``state.counter`` of stream ``(state.seed, state.stream)``.

    The draw is a pure function of ``state``; the returned state points at the
    next pair.
    """
    xi, eta = _block(model, state.seed, state.stream, state.block)
    i = state.offset
    return (float(xi[i]), float(eta[i])), state.advanced()
