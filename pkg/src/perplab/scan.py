"""Many discount levels on one path in a single pass.

Near ``b = 1`` a perpetuity needs on the order of ``1/(1-b)`` terms, which is
too many to sum term by term for every level of a schedule.  The scan groups
consecutive terms into chunks whose walk values span a small range, keeps
the first ``order + 1`` moments of each chunk about its centre, and
evaluates every level from those moments when the expansion is accurate.
The expansion remainder is bounded and added to the reported tail bound.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as K
from .perpetuity import PerpetuityValue, TruncationControl, _finish, _log_ratio
from .rng import BLOCK_SIZE

ORDER = 10
TAU = 0.25


def chunk_size(q: int) -> int:
    """Chunk length used in block ``q``; grows with the distance along the path."""
    reach = q * BLOCK_SIZE // 256
    if reach < 16:
        return 16
    return min(1 << (reach.bit_length() - 1), BLOCK_SIZE)


def scan(stream, one_minus_bs, ctrl: TruncationControl | None = None, *, tols=None, order: int = ORDER,
         tau: float = TAU) -> list[PerpetuityValue]:
    """``X(b)`` for every ``b = 1 - one_minus_bs[i]`` on one replay of the path.

    ``tols`` optionally gives each level its own certificate tolerance in
    place of ``ctrl.tol``.

    The stop rule is tested at chunk ends, so ``k_star`` can exceed the first
    index where the certificate holds by less than one chunk.  Entries that
    reach ``ctrl.k_max`` come back with ``converged=False``.
    """
    ctrl = ctrl or TruncationControl()
    oms = np.asarray(one_minus_bs, dtype=float)
    if oms.ndim != 1 or len(oms) == 0:
        raise ValueError("need a nonempty list of 1 - b values")
    if not np.all((oms > 0.0) & (oms < 1.0)):
        raise ValueError("1 - b must lie in (0, 1)")
    m = len(oms)
    lams = np.array([-math.log1p(-x) for x in oms])
    status = np.zeros(m, dtype=np.int64)
    kstar = np.zeros(m, dtype=np.int64)
    acc = np.zeros((m, 4))
    taylor = np.zeros(m)
    mom = np.zeros(order + 1)
    eabs = stream.eta_abs_mean
    tols = np.full(m, ctrl.tol) if tols is None else np.asarray(tols, dtype=float)
    if tols.shape != (m,) or not np.all(tols > 0.0):
        raise ValueError("tols must hold one positive tolerance per level")
    logratios = np.array([_log_ratio(eabs, t) for t in tols])
    carry = K.initial_carry()
    for blk in stream.blocks(with_T=False):
        S_ext = K.extend(carry, blk.S)
        K.scan_block(S_ext, blk.eta, blk.start, chunk_size(blk.index), lams, status, kstar, acc, taylor,
                     eabs, tols, logratios, ctrl.delta, ctrl.k_min, ctrl.k_max, order, tau, mom)
        if not np.any(status == K.RUNNING):
            break
        carry = S_ext[-K.WINDOW:]
    else:
        from .walk import PathExhausted
        raise PathExhausted("path ended before every sum met its stopping rule")
    return [_finish(acc[j], kstar[j], 1.0 - float(oms[j]), 1.0, int(status[j]), float(taylor[j]),
                    converged=bool(status[j] == K.STOPPED)) for j in range(m)]
