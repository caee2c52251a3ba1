"""One-sample Kolmogorov-Smirnov distance against the standard normal."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

# asymptotic critical values c(alpha) for sqrt(n) * D_n
KS_CRITICAL = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63, 0.001: 1.95}


def ks_distance(samples, cdf=ndtr) -> float:
    """``sup_x |F_n(x) - cdf(x)|``; the supremum is attained at a sample point."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n == 0:
        raise ValueError("samples must be nonempty")
    F = cdf(x)
    above = np.arange(1, n + 1) / n - F
    below = F - np.arange(0, n) / n
    return float(max(above.max(), below.max()))


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Asymptotic level-``alpha`` critical distance ``c(alpha)/sqrt(n)``."""
    if alpha not in KS_CRITICAL:
        raise ValueError(f"alpha must be one of {sorted(KS_CRITICAL)}")
    return KS_CRITICAL[alpha] / math.sqrt(n)
