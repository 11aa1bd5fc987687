"""Model-comparison statistics over repeated cross-validation scores.

Repeated CV runs share training data across folds, so their score
differences are positively correlated and the classic paired t-test is
anti-conservative. The corrected resampled t-test inflates the variance
term by the test/train size ratio rho:

    t = mean(d) / sqrt((1/k + rho) * var(d))        df = k - 1

with var(d) the unbiased sample variance of the k paired differences.
For an 80/10/10 split rho = 0.1/0.8 = 0.125, the default here.

The Student-t tail probabilities and quantiles are computed from scratch
(regularized incomplete beta via Lentz's continued fraction, quantile by
bisection) so the runtime has no third-party numeric dependency.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence


class StatsError(ValueError):
    pass


# -- Student-t distribution --------------------------------------------------

_CF_MAX_ITER = 300
_CF_EPS = 3e-16
_CF_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float) -> float:
    # Lentz's method for the continued fraction in the incomplete beta
    # integral; converges quickly for x < (a+1)/(a+b+2), which the caller
    # guarantees via the symmetry transform.
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise StatsError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise StatsError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise StatsError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for T Student-t distributed with df degrees of freedom."""
    if df <= 0:
        raise StatsError("degrees of freedom must be positive")
    if math.isnan(t):
        raise StatsError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))


def t_cdf(t: float, df: float) -> float:
    p = t_two_sided_p(t, df)
    return 1.0 - p / 2.0 if t >= 0 else p / 2.0


def t_quantile(q: float, df: float) -> float:
    """Inverse CDF by bisection; the CDF is strictly monotone so this is
    exact to double precision at the iteration counts used."""
    if not 0.0 < q < 1.0:
        raise StatsError(f"quantile level must lie in (0, 1), got {q}")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_quantile(1.0 - q, df)
    lo, hi = 0.0, 1.0
    for _ in range(2000):
        if t_cdf(hi, df) >= q:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise StatsError(f"quantile bracket failed for q={q}, df={df}")
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


# -- confidence intervals and the corrected resampled t-test ------------------------


def mean_ci(scores: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    """(mean, half-width of the t-based confidence interval)."""
    k = len(scores)
    if k < 2:
        raise StatsError(f"need at least 2 scores for an interval, got {k}")
    if not 0.0 < confidence < 1.0:
        raise StatsError(f"confidence must lie in (0, 1), got {confidence}")
    mean = statistics.fmean(scores)
    sd = statistics.stdev(scores)
    half = t_quantile((1.0 + confidence) / 2.0, k - 1) * sd / math.sqrt(k)
    return mean, half


@dataclass(frozen=True)
class TTestResult:
    k: int
    mean_diff: float
    s2: float            # unbiased variance of the paired differences
    rho: float
    t: float
    df: int
    p: float

    def significant(self, alpha: float = 0.05) -> bool:
        return self.p < alpha


def corrected_t(scores_a: Sequence[float], scores_b: Sequence[float],
                rho: float = 0.125) -> TTestResult:
    """Corrected resampled t-test on paired per-run scores.

    Pairs must line up by (repeat, fold). The variance inflation keeps the
    test honest when runs share training documents; rho = |test| / |train|.
    A zero-variance, nonzero-difference input yields t = +/-inf and p = 0 by
    convention so comparisons between deterministic models still terminate.
    """
    if len(scores_a) != len(scores_b):
        raise StatsError(f"paired score lists differ in length: "
                         f"{len(scores_a)} vs {len(scores_b)}")
    k = len(scores_a)
    if k < 2:
        raise StatsError(f"need at least 2 paired scores, got {k}")
    if rho <= 0:
        raise StatsError(f"rho must be positive, got {rho}")
    diffs = [a - b for a, b in zip(scores_a, scores_b)]
    mean_diff = statistics.fmean(diffs)
    s2 = statistics.variance(diffs)
    df = k - 1
    if s2 == 0.0:
        if mean_diff == 0.0:
            return TTestResult(k, 0.0, 0.0, rho, 0.0, df, 1.0)
        return TTestResult(k, mean_diff, 0.0, rho,
                           math.copysign(math.inf, mean_diff), df, 0.0)
    t = mean_diff / math.sqrt((1.0 / k + rho) * s2)
    return TTestResult(k, mean_diff, s2, rho, t, df, t_two_sided_p(t, df))
