"""Agreement metrics and the paired t-test.

Cohen's kappa corrects accuracy for chance agreement computed from the
marginals of a binary confusion matrix (Left counts as the positive class).
The paired t-test computes its two-tailed p value through a hand-rolled
regularized incomplete beta function (continued fraction, modified Lentz
iteration), so the package needs no statistics dependency at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Label
from .errors import DataError, NumericalError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary counts with Left as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        counts = (self.tp, self.fp, self.fn, self.tn)
        if any(c < 0 for c in counts):
            raise DataError(f"confusion counts must be nonnegative, got {counts}")
        if sum(counts) == 0:
            raise DataError("confusion matrix is empty")

    @classmethod
    def from_labels(
        cls, truth: np.ndarray, predicted: np.ndarray
    ) -> "ConfusionMatrix":
        t = np.asarray(truth)
        p = np.asarray(predicted)
        if t.shape != p.shape or t.ndim != 1:
            raise DataError("truth and predictions must be equal-length vectors")
        left = int(Label.LEFT)
        return cls(
            tp=int(((t == left) & (p == left)).sum()),
            fp=int(((t != left) & (p == left)).sum()),
            fn=int(((t == left) & (p != left)).sum()),
            tn=int(((t != left) & (p != left)).sum()),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total


def kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement; 0 when chance agreement is total."""
    n = cm.total
    observed = (cm.tp + cm.tn) / n
    expected = ((cm.tp + cm.fn) / n) * ((cm.tp + cm.fp) / n) + (
        (cm.fp + cm.tn) / n
    ) * ((cm.fn + cm.tn) / n)
    if expected == 1.0:
        return 0.0
    return (observed - expected) / (1.0 - expected)


_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-16
_BETACF_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz iteration."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise NumericalError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise DataError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DataError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    # The continued fraction converges fast only on one side of the mean;
    # use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: int) -> float:
    """P(T <= t) for Student's t with df degrees of freedom."""
    if df < 1:
        raise DataError(f"degrees of freedom must be >= 1, got {df}")
    if math.isnan(t):
        raise DataError("t statistic is NaN")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    if t == 0.0:
        return 0.5
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def two_tailed_t_p_value(t: float, df: int) -> float:
    """P(|T| >= |t|) under the null."""
    if df < 1:
        raise DataError(f"degrees of freedom must be >= 1, got {df}")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int


def paired_t_test(a: np.ndarray, b: np.ndarray) -> TTestResult:
    """Two-tailed paired t-test on matched score series.

    Zero-variance differences degenerate cleanly: nonzero mean gives
    t = +-inf with p = 0, zero mean gives t = 0 with p = 1.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("paired series must be equal-length vectors")
    n = x.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 pairs, got {n}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("paired series contain non-finite values")
    diff = x - y
    mean = diff.mean()
    sd = diff.std(ddof=1)
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, df=df)
        return TTestResult(t=math.copysign(math.inf, mean), p=0.0, df=df)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=float(t), p=two_tailed_t_p_value(float(t), df), df=df)
