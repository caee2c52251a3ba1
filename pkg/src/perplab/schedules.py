"""Discount schedules ``b_n -> 1`` and the index functions built on them.

Schedules close to 1 lose ``b`` to rounding long before ``1 - b`` becomes
unrepresentable, so every schedule is stored through ``ell_n = -log(1 - b_n)``
together with ``b_n`` and ``1 - b_n`` derived from it.  Functions of ``b``
accept an optional ``one_minus_b`` for the same reason.

Three schedules are built in:

* ``inverse-square``: ``b_n = 1 - n^-2``.
* ``class-B``: ``b_n = exp(-(1 - (log n)^-3)^n)``, slowly approaching 1.
* ``class-B-star``: ``b_n = exp(-1/D_n)`` with
  ``D_n = n! prod_{j<=n} (log j)^2 prod_{3<=k<=n} log log k``, approaching 1
  super-exponentially fast.

Each is defined "for large n"; below its first valid index the schedule is
spliced linearly in ``log(1 - b)`` down to ``b_1 = 1/2``.  Class conditions
are checked numerically with trend tests (see :func:`check_class`).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np

KINDS = ("inverse-square", "class-B", "class-B-star")
CLASS_TAGS = {"inverse-square": "plain", "class-B": "class-B", "class-B-star": "class-B-star", "custom": "plain"}

# 1 - b stays a normal double while ell is below this
ELL_LIMIT = 700.0
F_LOWER = math.sqrt(1.0 - math.exp(-1.0))
ZERO_THRESHOLD = 0.05


class DomainError(ValueError):
    """Argument outside the domain where the formula is defined."""


class OverflowGuard(UserWarning):
    """A schedule was cut short because ``1 - b_n`` is no longer representable."""


# ---------------------------------------------------------------- helpers on b

def _omb(b: float, one_minus_b: float | None) -> float:
    omb = 1.0 - b if one_minus_b is None else float(one_minus_b)
    if not 0.0 < omb < 1.0:
        raise DomainError(f"b must lie in (0, 1); got 1 - b = {omb!r}")
    return omb


def one_minus_power(b: float, p: float, one_minus_b: float | None = None) -> float:
    """``1 - b^p`` without cancellation."""
    return -math.expm1(p * math.log1p(-_omb(b, one_minus_b)))


def f_scale(b: float, one_minus_b: float | None = None) -> float:
    """``(2 (1-b^2)^-1 log log (1/(1-b^2)))^(-1/2)`` for ``b`` in ``(sqrt(1-1/e), 1)``."""
    omb = _omb(b, one_minus_b)
    if one_minus_b is None and not b > F_LOWER:
        raise DomainError(f"f_scale needs b > sqrt(1 - 1/e) = {F_LOWER!r}, got {b!r}")
    z = omb * (2.0 - omb)
    ll = math.log(-math.log(z))
    if not ll > 0.0:
        raise DomainError(f"log log 1/(1-b^2) = {ll!r} is not positive")
    return (2.0 / z * ll) ** -0.5


def index_N2(b: float, one_minus_b: float | None = None) -> int:
    """``floor(x log x)`` with ``x = 1/(1-b^2)``."""
    omb = _omb(b, one_minus_b)
    x = 1.0 / (omb * (2.0 - omb))
    return int(math.floor(x * math.log(x)))


def index_N2delta(b: float, delta: float, one_minus_b: float | None = None) -> int:
    """``floor(x log x)`` with ``x = 1/(1-b^(2 delta))``."""
    _check_delta(delta)
    x = 1.0 / one_minus_power(b, 2.0 * delta, one_minus_b)
    return int(math.floor(x * math.log(x)))


def index_N1(b: float, delta: float, theta: float, one_minus_b: float | None = None) -> int:
    """``floor((1+theta) x log log x)`` with ``x = 1/(1-b^(2 delta))``."""
    _check_delta(delta)
    if not theta > 0.0:
        raise DomainError("theta must be positive")
    x = 1.0 / one_minus_power(b, 2.0 * delta, one_minus_b)
    if not x > math.e:
        raise DomainError(f"log log 1/(1-b^(2 delta)) is not positive at b={b!r}")
    return int(math.floor((1.0 + theta) * x * math.log(math.log(x))))


def index_Ndelta(b: float, delta: float, one_minus_b: float | None = None) -> int:
    """``floor(1/(1-b^(2 delta)))``."""
    _check_delta(delta)
    return int(math.floor(1.0 / one_minus_power(b, 2.0 * delta, one_minus_b)))


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta!r}")


@dataclass(frozen=True)
class IndexFunctions:
    """The four index functions at fixed ``delta`` and ``theta``."""

    delta: float = 0.5
    theta: float = 1.0

    def __post_init__(self):
        _check_delta(self.delta)
        if not self.theta > 0.0:
            raise DomainError("theta must be positive")

    def N2(self, b, one_minus_b=None):
        return index_N2(b, one_minus_b)

    def N2delta(self, b, one_minus_b=None):
        return index_N2delta(b, self.delta, one_minus_b)

    def N1(self, b, one_minus_b=None):
        return index_N1(b, self.delta, self.theta, one_minus_b)

    def Ndelta(self, b, one_minus_b=None):
        return index_Ndelta(b, self.delta, one_minus_b)


# ------------------------------------------------------------------- schedules

@dataclass(frozen=True)
class ConditionReport:
    """Outcome of one numerical class-condition test.

    ``values`` is the witnessed condition sequence at indices ``n``;
    ``n0`` is the first index from which the test's property holds.
    """

    name: str
    description: str
    test: str
    passed: bool
    final_value: float
    n0: int | None
    statistics: dict
    n: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DiscountSchedule:
    kind: str
    class_tag: str
    n: np.ndarray
    ell: np.ndarray
    b: np.ndarray
    one_minus_b: np.ndarray
    n_valid: int
    truncated_at: int | None = None
    checks: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.n)

    @property
    def n_max(self) -> int:
        return int(self.n[-1])

    @property
    def values(self) -> np.ndarray:
        return self.b


def _from_ell(kind: str, n: np.ndarray, ell: np.ndarray, n_valid: int, truncated_at=None) -> DiscountSchedule:
    ell = np.asarray(ell, dtype=float)
    if len(ell) < 2:
        raise ValueError("a schedule needs at least two points")
    if not np.all(np.isfinite(ell)) or not np.all(ell > 0.0):
        raise ValueError("every b_n must lie in (0, 1)")
    if not np.all(np.diff(ell) > 0.0):
        raise ValueError("schedule must be strictly increasing")
    omb = np.exp(-ell)
    return DiscountSchedule(kind, CLASS_TAGS[kind], np.asarray(n, dtype=np.int64), ell, 1.0 - omb, omb,
                            int(n_valid), truncated_at)


def from_values(values) -> DiscountSchedule:
    """Schedule from explicit ``b_1 < b_2 < ...`` in ``(0, 1)``; tagged plain."""
    b = np.asarray(values, dtype=float)
    if b.ndim != 1 or not np.all((b > 0.0) & (b < 1.0)):
        raise ValueError("values must be a list of numbers in (0, 1)")
    return _from_ell("custom", np.arange(1, len(b) + 1), -np.log1p(-b), 1)


def _splice(ell: np.ndarray, n_valid: int) -> np.ndarray:
    """Replace ``ell_1 .. ell_{n_valid-1}`` by a line from ``log 2`` to ``ell_{n_valid}``."""
    out = ell.copy()
    if n_valid > 1:
        k = np.arange(1, n_valid)
        out[:n_valid - 1] = math.log(2.0) + (k - 1) / (n_valid - 1) * (ell[n_valid - 1] - math.log(2.0))
    return out


def _ell_inverse_square(n: np.ndarray) -> np.ndarray:
    return 2.0 * np.log(n.astype(float))


def _ell_class_b(n: np.ndarray) -> np.ndarray:
    nf = n.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = nf * np.log1p(-np.log(nf) ** -3.0)  # log of -log b_n
        t = np.exp(y)
        ratio = np.where(t > 0.0, -np.expm1(-t) / np.where(t > 0.0, t, 1.0), 1.0)
        return -y - np.log(ratio)


def _log_D_star(n_max: int) -> list:
    """``log D_n`` for ``n = 3 .. n_max`` in high precision."""
    with mpmath.workdps(40):
        out = []
        acc = mpmath.mpf(0)
        for n in range(2, n_max + 1):
            acc += 2 * mpmath.log(mpmath.log(n))
            if n >= 3:
                acc += mpmath.log(mpmath.log(mpmath.log(n)))
                out.append(mpmath.loggamma(n + 1) + acc)
        return out


def make_schedule(kind: str, n_max: int) -> DiscountSchedule:
    """Materialize a built-in schedule for ``n = 1 .. n_max`` with its class checks."""
    if kind not in KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")
    if n_max < 10:
        raise ValueError("n_max must be at least 10")
    n = np.arange(1, n_max + 1)
    truncated_at = None
    if kind == "inverse-square":
        ell = _ell_inverse_square(n)
        ell[0] = math.log(2.0)
        n_valid = 2
    elif kind == "class-B":
        ell = np.full(n_max, np.nan)
        ell[2:] = _ell_class_b(n[2:])
        # the instance decreases at first; it is valid once it increases for good
        falls = np.nonzero(np.diff(ell[2:]) <= 0.0)[0]
        n_valid = 3 if len(falls) == 0 else int(falls[-1]) + 4
        while ell[n_valid - 1] <= math.log(2.0):
            n_valid += 1
        ell = _splice(ell, n_valid)
    else:
        logD = _log_D_star(n_max)
        ell = np.full(n_max, np.nan)
        for i, ld in enumerate(logD):
            m = i + 3
            with mpmath.workdps(40):
                e = -mpmath.log(-mpmath.expm1(-mpmath.exp(-ld)))
            if e > ELL_LIMIT:
                truncated_at = m - 1
                warnings.warn(f"class-B-star schedule truncated at n={truncated_at}: 1 - b_n underflows beyond",
                              OverflowGuard, stacklevel=2)
                break
            ell[m - 1] = float(e)
        n_valid = 3
        while ell[n_valid - 1] <= math.log(2.0):
            n_valid += 1
        if truncated_at is not None:
            n = n[:truncated_at]
            ell = ell[:truncated_at]
        ell = _splice(ell, n_valid)
    sched = _from_ell(kind, n, ell, n_valid, truncated_at)
    checks = {name: check_class(sched, name) for name in CONDITIONS[kind]}
    return DiscountSchedule(sched.kind, sched.class_tag, sched.n, sched.ell, sched.b, sched.one_minus_b,
                            sched.n_valid, sched.truncated_at, checks)


# ---------------------------------------------------------------- trend tests

def _at(n: np.ndarray, target: float) -> int:
    return int(np.clip(np.searchsorted(n, target), 0, len(n) - 1))


def _decade_checkpoints(n: np.ndarray, count: int = 11) -> np.ndarray:
    lo, hi = _at(n, n[-1] / 10.0), len(n) - 1
    pts = np.unique(np.round(np.geomspace(n[lo], n[hi], count)))
    return np.unique([_at(n, p) for p in pts])


def trend_to_zero(n, values, threshold: float = ZERO_THRESHOLD) -> tuple[bool, int | None, dict]:
    """A nonnegative sequence tends to 0 on the materialized range.

    Passes when the final value is at most ``threshold``, is below the value
    at ``n_max/10``, and the sequence does not increase across log-spaced
    checkpoints of the last decade.
    """
    v = np.asarray(values, dtype=float)
    idx = _decade_checkpoints(n)
    ref = v[idx[0]]
    final = v[-1]
    monotone = bool(np.all(np.diff(v[idx]) <= 0.0))
    ok = bool(final <= threshold and final < ref and monotone)
    below = np.nonzero(v > threshold)[0]
    n0 = int(n[0]) if len(below) == 0 else (int(n[below[-1] + 1]) if below[-1] + 1 < len(n) else None)
    return ok, n0, {"final": float(final), "at_tenth": float(ref),
                    "decade_ratio": float(final / ref) if ref > 0 else 0.0,
                    "threshold": threshold, "monotone_last_decade": monotone}


def _decay_exponent(n, terms) -> float:
    i0 = _decade_checkpoints(n)[0]
    t0, t1 = terms[i0], terms[-1]
    return float(-(math.log(t1) - math.log(t0)) / (math.log(n[-1]) - math.log(n[i0])))


def series_converges(n, terms) -> tuple[bool, dict]:
    """Terms decay faster than ``1/n`` over the last decade."""
    p = _decay_exponent(n, terms)
    return p > 1.0, {"decay_exponent": p, "partial_sum": float(math.fsum(terms)), "last_term": float(terms[-1])}


def series_diverges(n, terms) -> tuple[bool, dict]:
    """Terms decay slower than ``1/n`` over the last decade."""
    p = _decay_exponent(n, terms)
    return p < 1.0, {"decay_exponent": p, "partial_sum": float(math.fsum(terms)), "last_term": float(terms[-1])}


def eventually_holds(n, holds) -> tuple[bool, int | None, dict]:
    """A property holds on a tail covering at least the last half of the range."""
    holds = np.asarray(holds, dtype=bool)
    bad = np.nonzero(~holds)[0]
    if len(bad) == 0:
        n0 = int(n[0])
    elif bad[-1] + 1 < len(n):
        n0 = int(n[bad[-1] + 1])
    else:
        n0 = None
    ok = n0 is not None and n0 <= (n[0] + n[-1]) / 2.0
    return ok, n0, {"holding_fraction": float(holds.mean())}


# ------------------------------------------------------------ class conditions

def _valid(s: DiscountSchedule):
    i = s.n_valid - 1
    return s.n[i:], s.ell[i:], s.one_minus_b[i:]


def _ratio_dev(ell):
    # 1 - (1-b_{n+1})/(1-b_n) = (b_{n+1}-b_n)/(1-b_n)
    return -np.expm1(-(ell[1:] - ell[:-1]))


def _cond_aux0(s):
    n, ell, omb = _valid(s)
    inc = omb[:-1] * _ratio_dev(ell)
    ratio = inc / (2.0 * omb[:-1] ** 1.5)
    dev = np.abs(ratio - 1.0)
    ok, n0, stats = trend_to_zero(n[:-1], dev)
    return ("|(b_{n+1}-b_n)/(2(1-b_n)^{3/2}) - 1| -> 0", "to-zero", ok, float(dev[-1]), n0, stats, n[:-1], dev)


def _cond_aux1(s):
    n, ell, omb = _valid(s)
    ok, stats = series_converges(n, omb)
    tenth = _at(n, n[-1] / 10.0)
    stats["tail_increment"] = float(omb[-1])
    stats["tail_sum_last_decade"] = float(math.fsum(omb[tenth:]))
    return ("sum (1-b_n) < inf", "series-converges", ok, float(omb[-1]), int(n[0]) if ok else None, stats, n, omb)


def _cond_ratio(s):
    n, ell, omb = _valid(s)
    dev = _ratio_dev(ell)
    ok, n0, stats = trend_to_zero(n[:-1], dev)
    return ("(1-b_{n+1})/(1-b_n) -> 1", "to-zero", ok, float(dev[-1]), n0, stats, n[:-1], dev)


def _class_b_ell_mp(n: int):
    with mpmath.workdps(80):
        t = (1 - mpmath.log(n) ** -3) ** n
        return -mpmath.log(-mpmath.expm1(-t))


def class_b_condition_b(n: int) -> float:
    """Condition (b) of the class-B instance at a single ``n``, in high precision."""
    with mpmath.workdps(80):
        a, c = _class_b_ell_mp(n), _class_b_ell_mp(n + 1)
        return float(-mpmath.expm1(a - c) * mpmath.log(a) ** 1.5)


# the condition (b) sequence of the class-B instance peaks near n = 1.2e6 and
# decays like (log n)^{-3/2}, so its trend is probed well past any range
# that can be materialized
PROBE_DECADES = 30


def _probe_grid(n_max: int, last_decade: int, per_decade: int = 4) -> np.ndarray:
    lo = math.log10(n_max)
    k = np.arange(math.ceil(lo * per_decade) + 1, last_decade * per_decade + 1)
    return np.unique(np.round(10.0 ** (k / per_decade)))


def _cond_b_b(s):
    n, ell, omb = _valid(s)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = _ratio_dev(ell) * np.log(ell[:-1]) ** 1.5
    keep = ell[:-1] > 1.0
    n_in, v_in = n[:-1][keep].astype(float), val[keep]
    probes = _probe_grid(s.n_max, PROBE_DECADES) if s.kind == "class-B" else np.array([])
    pv = np.array([class_b_condition_b(int(p)) for p in probes])
    n_all, v_all = np.concatenate((n_in, probes)), np.concatenate((v_in, pv))
    ok, n0, stats = trend_to_zero(n_all, v_all)
    peak = int(np.argmax(v_all))
    stats.update(materialized_final=float(v_in[-1]), probed_to=float(n_all[-1]), peak_n=float(n_all[peak]),
                 peak_value=float(v_all[peak]))
    return ("(b_{n+1}-b_n)/(1-b_n) (log log 1/(1-b_n))^{3/2} -> 0", "to-zero", ok, float(v_all[-1]), n0, stats,
            n_all, v_all)


def _cond_b_c(s):
    n, ell, omb = _valid(s)
    results = {}
    ok_all = True
    for eps in (0.5, 1.0):
        ok, stats = series_converges(n, ell ** (-1.0 - eps))
        results[f"eps={eps}"] = stats
        ok_all &= ok
    final = results["eps=0.5"]["last_term"]
    return ("sum (log 1/(1-b_n))^{-1-eps} < inf", "series-converges", ok_all, final,
            int(n[0]) if ok_all else None, results, n, ell ** -1.5)


def _cond_bstar_a(s):
    n, ell, omb = _valid(s)
    val = omb * np.log(n.astype(float))
    ok, n0, stats = trend_to_zero(n, val)
    return ("(1-b_n) log n -> 0", "to-zero", ok, float(val[-1]), n0, stats, n, val)


def _bstar_b_values(s):
    """Margin ``log N_{n+1} - log N_2(b_n)`` and whether ``N_{n+1} >= N_2(b_n)``."""
    n, ell, omb = _valid(s)
    margins, holds, idx = [], [], []
    with mpmath.workdps(50):
        for i in range(len(n) - 1):
            m = int(n[i])
            if m + 1 < 3:
                continue
            # -log b = -log(1 - e^{-ell})
            neglog_next = -mpmath.log1p(-mpmath.exp(-mpmath.mpf(ell[i + 1])))
            neglog_here = -mpmath.log1p(-mpmath.exp(-mpmath.mpf(ell[i])))
            N_next = mpmath.floor(-mpmath.log1p(-1 / mpmath.log(m + 1)) / (2 * neglog_next))
            x = 1 / (-mpmath.expm1(-2 * neglog_here))
            N2 = mpmath.floor(x * mpmath.log(x))
            idx.append(m)
            holds.append(bool(N_next >= N2))
            margins.append(float(mpmath.log(N_next) - mpmath.log(N2)) if N_next > 0 and N2 > 0 else -math.inf)
    return np.array(idx), np.array(margins), np.array(holds)


def _cond_bstar_b(s):
    idx, margins, holds = _bstar_b_values(s)
    ok, n0, stats = eventually_holds(idx, holds)
    return ("N_{n+1} >= N_2(b_n) for large n", "eventually", ok, float(margins[-1]), n0, stats, idx, margins)


def bstar_log_D(n_values, chunk: int = 1 << 20) -> np.ndarray:
    """``log D_n`` at the given (ascending) ``n`` in double precision.

    Accumulates the log-log products with a running sum; relative error is
    about ``n * eps``.
    """
    n_values = np.asarray(n_values, dtype=np.int64)
    out = np.empty(len(n_values))
    acc = 0.0
    done = 1
    for i, target in enumerate(n_values.tolist()):
        while done < target:
            hi = min(done + chunk, target)
            j = np.arange(done + 1, hi + 1, dtype=float)
            ll = np.log(np.log(j))
            terms = 2.0 * ll + np.where(j >= 3, np.log(np.where(j >= 3, ll, 1.0)), 0.0)
            acc += math.fsum(terms)
            done = hi
        out[i] = math.lgamma(target + 1) + acc
    return out


# probes for the divergence test of class-B-star condition (c): the local
# decay exponent of (log 1/(1-b_n^2))^{-a} only approaches a from above
BSTAR_PROBE_MAX = 10 ** 7


def _cond_bstar_c(s):
    n, ell, omb = _valid(s)
    logx = ell - np.log1p(1.0 - omb)  # log 1/(1-b^2)
    probes = _probe_grid(s.n_max, int(math.log10(BSTAR_PROBE_MAX)), per_decade=8).astype(np.int64)
    # beyond the materialized range b_n = 1 to double precision, so log 1/(1-b^2) = log D_n - log 2
    plogx = bstar_log_D(probes) - math.log(2.0)
    n_all = np.concatenate((n.astype(float), probes.astype(float)))
    x_all = np.concatenate((logx, plogx))
    results = {}
    ok_all = True
    for a in (0.25, 0.5, 0.75):
        ok, stats = series_diverges(n_all, x_all ** -a)
        stats["materialized_decay_exponent"] = _decay_exponent(n.astype(float), logx ** -a)
        stats["partial_sum"] = float(math.fsum(logx ** -a))
        results[f"a={a}"] = stats
        ok_all &= ok
    results["probed_to"] = float(n_all[-1])
    return ("sum (log 1/(1-b_n^2))^{-a} = inf", "series-diverges", ok_all, results["a=0.5"]["last_term"],
            int(n[0]) if ok_all else None, results, n_all, x_all ** -0.5)


CONDITIONS = {
    "inverse-square": {"aux0": _cond_aux0, "aux1": _cond_aux1, "a": _cond_ratio},
    "class-B": {"a": _cond_ratio, "b": _cond_b_b, "c": _cond_b_c},
    "class-B-star": {"a": _cond_bstar_a, "b": _cond_bstar_b, "c": _cond_bstar_c},
    "custom": {"a": _cond_ratio},
}


def check_class(schedule: DiscountSchedule, which: str) -> ConditionReport:
    """Evaluate one defining condition of the schedule's class on its valid range."""
    table = CONDITIONS[schedule.kind]
    if which not in table:
        raise ValueError(f"condition {which!r} not defined for {schedule.kind}; choose from {sorted(table)}")
    desc, test, ok, final, n0, stats, n, values = table[which](schedule)
    return ConditionReport(which, desc, test, bool(ok), float(final), n0, stats, np.asarray(n), np.asarray(values))


def schedule_csv(schedule: DiscountSchedule) -> str:
    """CSV with ``n, b, one_minus_b, ell`` and one column per stored condition."""
    names = sorted(schedule.checks)
    cols = {}
    for name in names:
        rep = schedule.checks[name]
        cols[name] = dict(zip(rep.n.tolist(), rep.values.tolist()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "b", "one_minus_b", "ell"] + [f"cond_{c}" for c in names])
    for i, n in enumerate(schedule.n.tolist()):
        row = [n, repr(float(schedule.b[i])), repr(float(schedule.one_minus_b[i])), repr(float(schedule.ell[i]))]
        row += [repr(float(cols[c][n])) if n in cols[c] else "" for c in names]
        w.writerow(row)
    return buf.getvalue()
