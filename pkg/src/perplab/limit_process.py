"""The Gaussian process ``X(u) = int_0^inf e^{-u y} dB(y)``, ``u > 0``.

Its covariance is ``1/(u + v)``.  Two samplers are provided: a Riemann sum of
Brownian increments (the reference, with an explicit bias bound) and an
exact Cholesky draw from the covariance matrix (a cross-check; the matrix is
a Cauchy matrix and becomes ill-conditioned on dense grids).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import DOMAIN_LIMIT_CHOLESKY, DOMAIN_LIMIT_INTEGRAL, block_generator

INTEGRAL = "integral-discretization"
CHOLESKY = "cholesky"

_BATCH = 128
# mesh points per generator block of the Brownian increments
MESH_BLOCK = 8192
_CHOLESKY_ROWS = 4096


class NonPositiveArgument(ValueError):
    pass


class FactorizationFailed(RuntimeError):
    """The covariance matrix could not be factored even with the largest jitter."""

    def __init__(self, message: str, *, condition_number: float, jitter: float):
        super().__init__(message)
        self.condition_number = condition_number
        self.jitter = jitter


@dataclass(frozen=True)
class LimitProcessSample:
    u_grid: tuple[float, ...]
    values: np.ndarray
    method: str
    cov_error_bound: float

    def covariance(self) -> np.ndarray:
        """Sample covariance about the known mean 0."""
        v = self.values
        return v.T @ v / v.shape[0]


def limit_covariance(u: float, v: float) -> float:
    if not (u > 0.0 and v > 0.0):
        raise NonPositiveArgument(f"arguments must be positive, got ({u!r}, {v!r})")
    return 1.0 / (u + v)


def covariance_matrix(u_grid) -> np.ndarray:
    u = _check_grid(u_grid)
    return 1.0 / (u[:, None] + u[None, :])


def _check_grid(u_grid) -> np.ndarray:
    u = np.asarray(u_grid, dtype=float)
    if u.ndim != 1 or len(u) == 0:
        raise ValueError("u_grid must be a nonempty list")
    if not np.all(u > 0.0):
        raise NonPositiveArgument("u_grid entries must be positive")
    if len(np.unique(u)) != len(u):
        raise ValueError("u_grid entries must be distinct; the covariance matrix is singular otherwise")
    if np.any(np.diff(u) <= 0.0):
        raise ValueError("u_grid must be strictly increasing")
    return u


def integral_defaults(u_grid) -> tuple[float, float]:
    """Default horizon ``20/u_min`` and mesh ``min(1e-3, 1/(100 u_max))``."""
    u = _check_grid(u_grid)
    return 20.0 / u[0], min(1e-3, 1.0 / (100.0 * u[-1]))


def integral_error_bound(u_grid, Y: float, delta: float) -> float:
    """Bound on the entrywise covariance bias of the Riemann-sum sampler.

    Cutting the integral at ``Y`` omits at most ``e^{-2 u_min Y}/(2 u_min)``;
    the left-endpoint sum of ``e^{-s y}`` over a mesh ``delta`` overshoots
    ``1/s`` by at most ``delta`` (it is ``delta/2 + O(s delta^2)``).
    """
    u = _check_grid(u_grid)
    return math.exp(-2.0 * u[0] * Y) / (2.0 * u[0]) + max(u[-1], 1.0) * delta


def sample_integral(u_grid, Y: float | None = None, delta: float | None = None, n_samples: int = 1000,
                    seed: int = 0, *, first_index: int = 0) -> LimitProcessSample:
    """``values[i, j] = sum_m e^{-u_j y_m} dB_m`` with ``y_m = m*delta <= Y``.

    The increments of sample ``first_index + i`` come from stream
    ``first_index + i`` of ``seed``, one block per ``MESH_BLOCK`` mesh points,
    so any sample can be regenerated on its own.
    """
    u = _check_grid(u_grid)
    dY, dd = integral_defaults(u)
    Y = dY if Y is None else float(Y)
    delta = dd if delta is None else float(delta)
    if not (Y > 0.0 and delta > 0.0):
        raise ValueError("Y and delta must be positive")
    n_mesh = int(math.floor(Y / delta + 1e-9)) + 1
    y = np.arange(n_mesh) * delta
    weights = np.exp(-np.outer(y, u)) * math.sqrt(delta)
    n_blocks = -(-n_mesh // MESH_BLOCK)
    values = np.empty((n_samples, len(u)))
    z = np.empty((_BATCH, n_blocks * MESH_BLOCK))
    for lo in range(0, n_samples, _BATCH):
        hi = min(lo + _BATCH, n_samples)
        for r in range(hi - lo):
            stream = first_index + lo + r
            for q in range(n_blocks):
                gen = block_generator(seed, stream, q, DOMAIN_LIMIT_INTEGRAL)
                z[r, q * MESH_BLOCK:(q + 1) * MESH_BLOCK] = gen.standard_normal(MESH_BLOCK)
        values[lo:hi] = z[:hi - lo, :n_mesh] @ weights
    return LimitProcessSample(tuple(u.tolist()), values, INTEGRAL, integral_error_bound(u, Y, delta))


def cholesky_factor(u_grid, jitter: float = 1e-12, max_jitter: float = 1e-8) -> tuple[np.ndarray, float]:
    """Lower factor of ``[1/(u_i+u_j)] + jitter*I``; jitter grows by 10 until it works."""
    cov = covariance_matrix(u_grid)
    eye = np.eye(len(cov))
    j = float(jitter)
    while True:
        try:
            return np.linalg.cholesky(cov + j * eye), j
        except np.linalg.LinAlgError:
            if j * 10.0 > max_jitter * (1.0 + 1e-12):
                cond = float(np.linalg.cond(cov))
                raise FactorizationFailed(
                    f"covariance of {len(cov)} grid points not factorable with jitter up to {j:.1e} "
                    f"(condition number {cond:.3e}); use a coarser grid",
                    condition_number=cond, jitter=j) from None
            j *= 10.0


def sample_cholesky(u_grid, n_samples: int = 1000, seed: int = 0, jitter: float = 1e-12) -> LimitProcessSample:
    """Exact Gaussian draws with covariance ``[1/(u_i+u_j)]`` (plus jitter)."""
    u = _check_grid(u_grid)
    L, used = cholesky_factor(u, jitter)
    d = len(u)
    values = np.empty((n_samples, d))
    for c, lo in enumerate(range(0, n_samples, _CHOLESKY_ROWS)):
        hi = min(lo + _CHOLESKY_ROWS, n_samples)
        gen = block_generator(seed, 0, c, DOMAIN_LIMIT_CHOLESKY)
        values[lo:hi] = gen.standard_normal((_CHOLESKY_ROWS, d))[:hi - lo] @ L.T
    return LimitProcessSample(tuple(u.tolist()), values, CHOLESKY, used * d)
