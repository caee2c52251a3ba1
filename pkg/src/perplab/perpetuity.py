"""Discounted perpetuities along a single path.

The central object is ``X(b, u) = sum_{k>=0} b^{u S_k} eta_{k+1}`` evaluated on
one realized path.  Summation runs in increasing ``k`` with compensated
accumulation and stops when a tail certificate drops below ``ctrl.tol``:

    cert_k = b^{u W_k} * E|eta| / (1 - b^{u delta S_k / k})

where ``W_k`` is the minimum of the last 64 walk values.  The certificate
bounds the omitted tail provided the walk keeps its estimated drift; it is a
heuristic, checked statistically against brute-force sums.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from . import _kernels as K

EPS = sys.float_info.epsilon
ROUNDING_FACTOR = 16.0


class NoConvergenceDetected(RuntimeError):
    """The term cap was reached before the tail certificate met the tolerance."""

    def __init__(self, message: str, *, b: float, u: float, k: int, certificate: float, partial: float):
        super().__init__(message)
        self.b = b
        self.u = u
        self.k = k
        self.certificate = certificate
        self.partial = partial


class ModelNotCentered(ValueError):
    """The statistic requires E eta = 0."""


@dataclass(frozen=True)
class TruncationControl:
    tol: float = 1e-9
    k_min: int = 256
    k_max: int = 10_000_000
    delta: float = 0.5

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.k_min < 1:
            raise ValueError("k_min must be at least 1")
        if self.k_max < self.k_min:
            raise ValueError("k_max must be at least k_min")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")


@dataclass(frozen=True)
class PerpetuityValue:
    """A truncated sum with its certified error.

    ``tail_bound = certificate + taylor_bound + rounding``.  ``converged`` is
    False only for grid cells that hit the term cap; ``tail_bound`` then holds
    the last certificate, which exceeds the tolerance.
    """

    value: float
    b: float
    u: float
    k_star: int
    tail_bound: float
    certificate: float
    rounding: float
    taylor_bound: float = 0.0
    converged: bool = True

    @property
    def bracket(self) -> tuple[float, float]:
        return self.value - self.tail_bound, self.value + self.tail_bound


def rate(b: float, u: float = 1.0, one_minus_b: float | None = None) -> float:
    """``-u * log b``; pass ``one_minus_b`` when ``b`` is within rounding of 1."""
    if one_minus_b is not None:
        if not 0.0 < one_minus_b < 1.0:
            raise ValueError(f"1 - b must lie in (0, 1), got {one_minus_b!r}")
        return -u * math.log1p(-one_minus_b)
    return -u * math.log(b)


def _check_base(b: float, u: float) -> None:
    if not 0.0 < b < 1.0:
        raise ValueError(f"b must lie in (0, 1), got {b!r}")
    if not u > 0.0:
        raise ValueError(f"u must be positive, got {u!r}")


def _log_ratio(eabs: float, tol: float) -> float:
    return -math.inf if eabs == 0.0 else math.log(eabs / tol)


def _finish(acc_row, k, b, u, status, taylor=0.0, converged=True) -> PerpetuityValue:
    total, comp, absw, cert = (float(v) for v in acc_row)
    value = total + comp
    rounding = ROUNDING_FACTOR * EPS * absw + 2.0 * EPS * abs(value)
    return PerpetuityValue(value=value, b=b, u=u, k_star=int(k), tail_bound=cert + taylor + rounding,
                           certificate=cert, rounding=rounding, taylor_bound=taylor, converged=converged)


def _direct_cells(stream, lams, ctrl: TruncationControl):
    """Run the direct kernel for several rates on one replay of the path."""
    m = len(lams)
    acc = np.zeros((m, 1, 4))
    status = [K.RUNNING] * m
    kout = [0] * m
    logratio = _log_ratio(stream.eta_abs_mean, ctrl.tol)
    carry = K.initial_carry()
    remaining = m
    for blk in stream.blocks(with_T=False):
        S_ext = K.extend(carry, blk.S)
        for j in range(m):
            if status[j] != K.RUNNING:
                continue
            st, k = K.direct_block(S_ext, blk.eta, blk.start, lams[j], stream.eta_abs_mean, ctrl.tol,
                                   logratio, ctrl.delta, ctrl.k_min, ctrl.k_max, acc[j])
            kout[j] = k
            if st != K.RUNNING:
                status[j] = st
                remaining -= 1
        if remaining == 0:
            break
        carry = S_ext[-K.WINDOW:]
    else:
        from .walk import PathExhausted
        raise PathExhausted("path ended before every sum met its stopping rule")
    return acc, status, kout


def evaluate(stream, b: float, u: float = 1.0, ctrl: TruncationControl | None = None, *,
             one_minus_b: float | None = None) -> PerpetuityValue:
    """``sum_k b^{u S_k} eta_{k+1}`` on the path of ``stream``, with a tail bound."""
    ctrl = ctrl or TruncationControl()
    _check_base(b, u)
    lam = rate(b, u, one_minus_b)
    acc, status, kout = _direct_cells(stream, [lam], ctrl)
    if status[0] == K.CAPPED:
        raise NoConvergenceDetected(
            f"reached k_max={ctrl.k_max} at b={b!r}, u={u!r} with tail certificate {acc[0, 0, 3]:.3e} "
            f"> tol={ctrl.tol:.3e} after {kout[0]} terms; partial sum {acc[0, 0, 0] + acc[0, 0, 1]:.6g}",
            b=b, u=u, k=kout[0], certificate=float(acc[0, 0, 3]), partial=float(acc[0, 0, 0] + acc[0, 0, 1]))
    return _finish(acc[0, 0], kout[0], b, u, status[0])


def evaluate_grid(stream, bs, us, ctrl: TruncationControl | None = None) -> list[list[PerpetuityValue]]:
    """Evaluate every ``(b, u)`` cell on one replay of the path.

    Returns ``grid[i][j]`` for ``bs[i]``, ``us[j]``.  Each cell is bit-identical
    to ``evaluate(stream, bs[i], us[j], ctrl)``; a cell that hits ``k_max`` is
    returned with ``converged=False`` instead of raising.
    """
    ctrl = ctrl or TruncationControl()
    bs = [float(b) for b in bs]
    us = [float(u) for u in us]
    if not bs or not us:
        raise ValueError("bs and us must be nonempty")
    if any(x >= y for x, y in zip(bs, bs[1:])) or any(x >= y for x, y in zip(us, us[1:])):
        raise ValueError("bs and us must be strictly ascending")
    for b in bs:
        for u in us:
            _check_base(b, u)
    cells = [(b, u) for b in bs for u in us]
    acc, status, kout = _direct_cells(stream, [rate(b, u) for b, u in cells], ctrl)
    flat = [_finish(acc[j, 0], kout[j], b, u, status[j], converged=status[j] == K.STOPPED)
            for j, (b, u) in enumerate(cells)]
    return [flat[i * len(us):(i + 1) * len(us)] for i in range(len(bs))]


def slln_estimate(stream, b: float, ctrl: TruncationControl | None = None) -> float:
    """``(1 - b) * X(b)``; its limit as ``b -> 1`` is ``m / mu``."""
    return (1.0 - b) * evaluate(stream, b, 1.0, ctrl).value


def _require_centered(stream) -> None:
    if abs(stream.m) > 1e-12 * (1.0 + stream.eta_abs_mean):
        raise ModelNotCentered(f"statistic needs E eta = 0, model has m={stream.m!r}")


def truncated_statistic(stream, b: float, M: int) -> float:
    """``(sum_{k<=M} b^{2 mu k})^{-1/2} * sum_{k<=M} b^{S_k} eta_{k+1}``."""
    _require_centered(stream)
    _check_base(b, 1.0)
    if M < 1:
        raise ValueError("M must be at least 1")
    xi, eta, S, T = stream.prefix(M + 1)
    S_before = np.concatenate(([0.0], S[:-1]))
    logb = math.log(b)
    total = math.fsum(np.exp(S_before * logb) * eta)
    r = 2.0 * stream.mu * logb
    norm = math.expm1(r * (M + 1)) / math.expm1(r)
    return total / math.sqrt(norm)


def parts_identity_check(stream, b: float, ell: int) -> tuple[float, float]:
    """Both sides of the summation-by-parts identity over the first ``ell`` steps.

    ``lhs = sum_{k=1}^{ell} b^{S_{k-1}} eta_k`` and
    ``rhs = sum_{k=1}^{ell-1} (b^{S_{k-1}} - b^{S_k}) T_k + b^{S_{ell-1}} T_ell``.
    """
    if ell < 2:
        raise ValueError("ell must be at least 2")
    _check_base(b, 1.0)
    xi, eta, S, T = stream.prefix(ell)
    w = np.power(b, np.concatenate(([0.0], S)))  # b^{S_0} .. b^{S_ell}
    lhs = math.fsum(w[:ell] * eta)
    rhs = math.fsum(np.concatenate(((w[:ell - 1] - w[1:ell]) * T[:ell - 1], [w[ell - 1] * T[ell - 1]])))
    return lhs, rhs


def relative_discrepancy(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / (1.0 + abs(lhs))


def brute_force(stream, b: float, u: float = 1.0, n_terms: int = 1_000_000) -> float:
    """Exactly rounded sum of the first ``n_terms`` terms, ``b^{u S_k}`` via ``pow``."""
    _check_base(b, u)
    xi, eta, S, T = stream.prefix(n_terms)
    S_before = np.concatenate(([0.0], S[:-1]))
    return math.fsum(np.power(b, u * S_before) * eta)
