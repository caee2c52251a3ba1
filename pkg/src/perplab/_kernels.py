"""Compiled inner loops for discounted sums along a walk.

Both kernels consume one block of a path at a time.  The walk values are
passed as an extended array ``S_ext`` of length ``n + 64`` holding
``S_{k0-63} .. S_{k0+n}``: ``S_{k0+j} = S_ext[63 + j]``.  Positions before the
start of the path are ``+inf`` so they never lower a window minimum.

Accumulator rows are ``[sum, compensation, abs_weight, certificate]`` where
``abs_weight`` collects ``sum |term| * (1 + lam*|S|)`` for the rounding
allowance.  No fastmath: the summation order is part of the contract.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

WINDOW = 64

RUNNING = 0
STOPPED = 1
CAPPED = 2


@njit(cache=True, inline="always")
def _neumaier(acc, j, x):
    s = acc[j, 0]
    t = s + x
    if abs(s) >= abs(x):
        acc[j, 1] += (s - t) + x
    else:
        acc[j, 1] += (x - t) + s
    acc[j, 0] = t


@njit(cache=True)
def _window_min(S_ext, i):
    w = S_ext[i]
    for r in range(i + 1, i + WINDOW):
        if S_ext[r] < w:
            w = S_ext[r]
    return w


@njit(cache=True)
def _certificate(lam, s, w, k, eabs, delta):
    if eabs == 0.0:
        return 0.0
    mu_hat = s / k
    if not mu_hat > 0.0:
        return math.inf
    g = -math.expm1(-lam * delta * mu_hat)
    return math.exp(-lam * w) * eabs / g


@njit(cache=True)
def direct_block(S_ext, eta, k0, lam, eabs, tol, logratio, delta, k_min, k_max, acc):
    """Sum terms ``k0 .. k0+n-1`` for one rate, stopping by the certificate.

    Before term ``k`` is added the stop rule is tested at ``k`` (for
    ``k >= k_min``).  Returns ``(status, k)`` where ``k`` is the number of
    terms summed when the loop left.  ``acc`` has shape ``(1, 4)``.
    """
    n = eta.shape[0]
    for i in range(n):
        k = k0 + i
        s = S_ext[63 + i]
        if k >= k_min:
            # W <= S_k and G >= 1, so this is necessary for the rule to fire
            if lam * s >= logratio:
                cert = _certificate(lam, s, _window_min(S_ext, i), k, eabs, delta)
                acc[0, 3] = cert
                if cert <= tol:
                    return STOPPED, k
            else:
                acc[0, 3] = math.exp(-lam * s) * eabs
            if k >= k_max:
                return CAPPED, k
        term = math.exp(-lam * s) * eta[i]
        _neumaier(acc, 0, term)
        acc[0, 2] += abs(term) * (1.0 + lam * abs(s))
    return RUNNING, k0 + n


@njit(cache=True)
def taylor_order(x, max_order):
    """Smallest order whose remainder ``x^(P+1)/(P+1)! e^x`` is below 2^-60."""
    ex = math.exp(x)
    term = x
    for p in range(1, max_order):
        term *= x / (p + 1)
        if term * ex <= 8.673617379884035e-19:
            return p
    return max_order


@njit(cache=True)
def scan_block(S_ext, eta, k0, chunk, lams, status, kstar, acc, taylor, eabs, tols, logratios,
               delta, k_min, k_max, order, tau, mom):
    """Advance many rates over one block using chunked Taylor moments.

    The block is cut into chunks of ``chunk`` terms.  For each chunk the
    moments ``sum eta * (S - c)^p / p!`` about the chunk centre ``c`` are
    formed once; every rate with ``x = lam * h <= tau`` (``h`` the half-range
    of S over the chunk) evaluates the chunk by Horner's rule at the order
    ``taylor_order(x, order)``, the others sum it term by term.  A rate's
    result never depends on which other rates are present.  The stop rule is
    tested at chunk ends only.  ``taylor`` accumulates the remainder bound of
    the expansions.  Each rate has its own tolerance ``tols[j]`` with
    ``logratios[j] = log(eabs/tols[j])``.
    """
    n = eta.shape[0]
    m = lams.shape[0]
    orders = np.empty(m, dtype=np.int64)
    inv = np.empty(order + 2)
    for p in range(1, order + 2):
        inv[p] = 1.0 / p
    for a in range(0, n, chunk):
        e = min(a + chunk, n)
        lo = S_ext[63 + a]
        hi = lo
        amass = 0.0
        for i in range(a, e):
            s = S_ext[63 + i]
            if s < lo:
                lo = s
            if s > hi:
                hi = s
            amass += abs(eta[i])
        c = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        smax = max(abs(lo), abs(hi))
        # highest order any rate needs on this chunk
        need = -1
        for j in range(m):
            orders[j] = -1
            if status[j] == RUNNING:
                x = lams[j] * h
                if x <= tau:
                    orders[j] = taylor_order(x, order)
                    if orders[j] > need:
                        need = orders[j]
        if need >= 0:
            for p in range(need + 1):
                mom[p] = 0.0
            for i in range(a, e):
                d = S_ext[63 + i] - c
                pw = eta[i]
                mom[0] += pw
                for p in range(1, need + 1):
                    pw *= d * inv[p]
                    mom[p] += pw
        for j in range(m):
            if status[j] != RUNNING:
                continue
            lam = lams[j]
            x = lam * h
            pj = orders[j]
            if pj >= 0:
                poly = mom[pj]
                for p in range(pj - 1, -1, -1):
                    poly = poly * (-lam) + mom[p]
                scale = math.exp(-lam * c)
                _neumaier(acc, j, scale * poly)
                rem = x
                for p in range(1, pj + 1):
                    rem *= x * inv[p + 1]
                peak = scale * math.exp(x) * amass
                taylor[j] += peak * rem
                acc[j, 2] += peak * (1.0 + lam * smax) * (1.0 + (e - a + 2 * pj) / 16.0)
            else:
                for i in range(a, e):
                    s = S_ext[63 + i]
                    term = math.exp(-lam * s) * eta[i]
                    _neumaier(acc, j, term)
                    acc[j, 2] += abs(term) * (1.0 + lam * abs(s))
        k_end = k0 + e
        s_end = S_ext[63 + e]
        w = 0.0
        have_w = False
        for j in range(m):
            if status[j] != RUNNING:
                continue
            lam = lams[j]
            if k_end >= k_min:
                if lam * s_end >= logratios[j]:
                    if not have_w:
                        w = _window_min(S_ext, e)
                        have_w = True
                    cert = _certificate(lam, s_end, w, k_end, eabs, delta)
                    acc[j, 3] = cert
                    if cert <= tols[j]:
                        status[j] = STOPPED
                        kstar[j] = k_end
                        continue
                else:
                    acc[j, 3] = math.exp(-lam * s_end) * eabs
                if k_end >= k_max:
                    status[j] = CAPPED
                    kstar[j] = k_end


def extend(carry: np.ndarray, S_after: np.ndarray) -> np.ndarray:
    """Build ``S_ext`` from the previous 64 walk values and this block's."""
    return np.concatenate((carry, S_after))


def initial_carry() -> np.ndarray:
    carry = np.full(WINDOW, np.inf)
    carry[-1] = 0.0
    return carry
