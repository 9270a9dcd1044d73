"""Tail sums of regularly varying series and the fitted tail model."""
from dataclasses import dataclass
import math

import mpmath
import numpy as np
from scipy.special import zeta as hurwitz_zeta

# Below this start index the series is summed term by term before switching
# to Euler-Maclaurin; at n >= 1000 the f''' correction is far below 1e-15.
EM_START = 1000


def _log_derivatives(e, lam, x):
    """Derivatives of g = log f for f(x) = x^-e exp(-lam x)."""
    g1 = -e / x - lam
    g2 = e / x**2
    g3 = -2.0 * e / x**3
    return g1, g2, g3


def _em_correction(f, g1, g2, g3):
    d1 = f * g1
    d3 = f * (g1**3 + 3.0 * g1 * g2 + g3)
    return f / 2.0 - d1 / 12.0 + d3 / 720.0


def power_tail_sum(C, e, a, lam=0.0):
    """Return sum_{n >= a} C n^-e exp(-lam n) for an integer a >= 1 and lam >= 0.

    Returns ``inf`` when the series diverges (lam = 0 and e <= 1).
    """
    a = int(a)
    if a < 1:
        raise ValueError("start index must be >= 1")
    if C == 0:
        return 0.0
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if lam == 0:
        if e <= 1:
            return math.inf
        return C * float(hurwitz_zeta(e, a))
    if e == 0:
        return C * math.exp(-lam * a) / -math.expm1(-lam)
    if lam > 0.02:
        n = np.arange(a, a + int(math.ceil(45.0 / lam)) + 1, dtype=float)
        return C * float(np.sum(np.exp(-e * np.log(n) - lam * n)))
    b = max(a, EM_START)
    head = 0.0
    if b > a:
        n = np.arange(a, b, dtype=float)
        head = float(np.sum(np.exp(-e * np.log(n) - lam * n)))
    # int_b^inf x^-e exp(-lam x) dx = lam^(e-1) Gamma(1-e, lam b)
    with mpmath.workdps(30):
        integral = float(mpmath.power(lam, e - 1) * mpmath.gammainc(1 - e, lam * b))
    f = b ** (-e) * math.exp(-lam * b)
    corr = _em_correction(f, *_log_derivatives(e, lam, float(b)))
    return C * (head + integral + corr)


@dataclass(frozen=True)
class TailModel:
    """u(n) ~ C n^-e r^n beyond a table, with a bracket [C_lo, C_hi] on C."""

    C: float
    e: float
    r: float = 1.0
    C_lo: float = None
    C_hi: float = None

    def __post_init__(self):
        if self.C_lo is None:
            object.__setattr__(self, "C_lo", self.C)
        if self.C_hi is None:
            object.__setattr__(self, "C_hi", self.C)

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        if self.C == 0:
            return np.zeros_like(n)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            logv = math.log(self.C) - self.e * np.log(n) + n * math.log(self.r)
            out = np.exp(logv)
        return np.where(np.isinf(n), 0.0, out)

    def log(self, n):
        n = np.asarray(n, dtype=float)
        if self.C == 0:
            return np.full_like(n, -np.inf)
        return math.log(self.C) - self.e * np.log(n) + n * math.log(self.r)

    def times(self, other):
        return TailModel(self.C * other.C, self.e + other.e, self.r * other.r,
                         self.C_lo * other.C_lo, self.C_hi * other.C_hi)

    def power(self, zeta):
        return TailModel(self.C**zeta, self.e * zeta, self.r**zeta,
                         self.C_lo**zeta, self.C_hi**zeta)

    def sum_from(self, a, lam=0.0, which="mid"):
        """sum_{n >= a} of the model times exp(-lam n)."""
        C = {"mid": self.C, "lo": self.C_lo, "hi": self.C_hi}[which]
        rate = lam - math.log(self.r)
        if rate < 0:
            return math.inf
        return power_tail_sum(C, self.e, a, rate)


def fit_tail(values, n, e, geometric=False):
    """Fit C n^-e r^n to positive ``values`` on indices ``n``.

    With ``geometric`` the rate r is fitted by least squares on log values,
    otherwise r = 1 and C is the geometric mean of values * n^e.
    The bracket is the min/max of the normalized values over the window.
    """
    values = np.asarray(values, dtype=float)
    n = np.asarray(n, dtype=float)
    keep = values > 0
    if keep.sum() < 2:
        return TailModel(0.0, e, 1.0)
    v, n = values[keep], n[keep]
    if geometric:
        slope, icpt = np.polyfit(n, np.log(v) + e * np.log(n), 1)
        r = min(math.exp(slope), 1.0)
        norm = np.log(v) + e * np.log(n) - n * math.log(r)
    else:
        r = 1.0
        norm = np.log(v) + e * np.log(n)
    return TailModel(float(np.exp(norm.mean())), e, r,
                     float(np.exp(norm.min())), float(np.exp(norm.max())))
