"""Desk-scale checks of limit theorems: exponent fits, lower tails, rate functions."""
from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import beta as beta_dist

from ._kernels import count_sums_below
from ._series import power_tail_sum
from .annealed import prob_sigma_in_tau_grid
from .dist import Constant, typical_scale
from .errors import NonPositiveValue
from .renewal import alpha_star, doney_asymptote, mass_function
from .rng import derive_seed


@dataclass(frozen=True)
class FitReport:
    slope: float
    intercept: float
    rms: float
    n_lo: float
    n_hi: float
    points: int

    @property
    def decades(self):
        return math.log10(self.n_hi / self.n_lo)


def fit_tail_exponent(points):
    """Least squares of log value against log n over (n, value) pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (n, value) pairs")
    if len(pts) < 6:
        raise ValueError("need at least 6 points")
    n, v = pts[:, 0], pts[:, 1]
    if np.any(v <= 0) or np.any(n <= 0):
        raise NonPositiveValue("log-log fit needs positive n and values")
    x, y = np.log(n), np.log(v)
    slope, icpt = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - slope * x - icpt) ** 2)))
    return FitReport(float(slope), float(icpt), rms, float(n.min()), float(n.max()), len(n))


def log_grid(lo, hi, points):
    """Distinct integers spaced geometrically on [lo, hi]."""
    return np.unique(np.round(np.geomspace(lo, hi, points)).astype(np.int64))


# ---------------------------------------------------------------------------
# renewal asymptotics

@dataclass(frozen=True)
class DoneyReport:
    fit: FitReport
    n: np.ndarray
    u: np.ndarray
    asymptote: np.ndarray
    ratio: np.ndarray

    @property
    def max_deviation(self):
        return float(np.max(np.abs(self.ratio - 1.0)))


def verify_doney(law, M, window=None, points=64, u=None):
    """Compare the u table with its leading asymptote on ``window`` (default [M/10, M])."""
    if M < 2**12:
        raise ValueError("M must be >= 2^12")
    if u is None:
        u = mass_function(law, M)
    lo, hi = window if window is not None else (M // 10, M)
    n = log_grid(lo, min(hi, u.M), points)
    vals = u(n)
    asym = np.array([doney_asymptote(law, int(k)) for k in n])
    fit = fit_tail_exponent(np.column_stack([n, vals]))
    return DoneyReport(fit, n, vals, asym, vals / asym)


@dataclass(frozen=True)
class KstarReport:
    fit: FitReport
    expected: float
    n: np.ndarray
    values: np.ndarray
    stderr: np.ndarray


def verify_kstar(law_tau, law_sigma, n_grid, samples, seed, u_tau=None):
    """Monte Carlo P(sigma_n in tau) on ``n_grid`` and its log-log slope,
    to be compared with -(1 + alpha*)."""
    if u_tau is None:
        u_tau = mass_function(law_tau)
    n = np.asarray(sorted(set(int(k) for k in n_grid)), dtype=np.int64)
    m, se = prob_sigma_in_tau_grid(law_sigma, u_tau, n, samples, derive_seed(seed, "kstar"))
    fit = fit_tail_exponent(np.column_stack([n, m]))
    expected = -(1.0 + alpha_star(law_tau.tail.alpha, law_sigma.tail.alpha))
    return KstarReport(fit, expected, n, m, se)


# ---------------------------------------------------------------------------
# lower tail of tau_n

@dataclass(frozen=True)
class TailProbe:
    n: int
    eps: float
    scale: float
    threshold: int
    hits: int
    samples: int
    frequency: float
    upper: float


def clopper_pearson_upper(hits, samples, level=0.95):
    """Exact one-sided binomial upper confidence bound."""
    if hits >= samples:
        return 1.0
    return float(beta_dist.ppf(level, hits + 1, samples - hits))


def lower_tail_probe(law, n, eps, samples, seed, level=0.95):
    """Frequency of tau_n <= eps * a_n with a Clopper-Pearson upper bound."""
    a_n = typical_scale(law, n)
    limit = int(math.floor(eps * a_n))
    if limit < n * law.d:
        hits = 0
    else:
        cdf = np.cumsum(law.table(limit)[1:])
        hits = int(count_sums_below(cdf, int(n), limit, int(samples),
                                    derive_seed(seed, "lowertail") % 2**32))
    return TailProbe(int(n), float(eps), float(a_n), limit, hits, int(samples),
                     hits / samples, clopper_pearson_upper(hits, samples, level))


# ---------------------------------------------------------------------------
# rate functions

@dataclass(frozen=True)
class RateResult:
    delta: float
    I: float
    J: float
    lam: float
    boundary: bool
    derivative: float


def _tail_moment(law, lam, power):
    """sum_{n>M} n^power K(n) e^{lam n} for lam < 0 under the tail formula."""
    if law.tail is None:
        return 0.0
    a, phi = law.tail.alpha, law.tail.phi
    M = law.M
    if isinstance(phi, Constant):
        return power_tail_sum(phi.c, 1.0 + a - power, M + 1, -lam)
    end = min(M + int(math.ceil(60.0 / -lam)), M + 2**24)
    k = np.arange(M + 1, end + 1, dtype=float)
    head = float(np.sum(phi(k) * k ** (power - 1.0 - a) * np.exp(lam * k)))
    return head + power_tail_sum(float(phi(float(end))), 1.0 + a - power, end + 1, -lam)


def _rescaled(v, logscale):
    return math.exp(math.log(v) - logscale) if v > 0 else 0.0


class _LogMGF:
    """Lambda(lam) = log sum_k K(k) e^{lam k} for lam <= 0 and its derivative."""

    def __init__(self, law):
        self.law = law
        self.k = np.arange(1, law.M + 1, dtype=float)
        with np.errstate(divide="ignore"):
            self.logK = np.log(law.probs)

    def _parts(self, lam):
        w = self.logK + lam * self.k
        top = float(np.max(w))
        e = np.exp(w - top)
        s0 = float(np.sum(e))
        s1 = float(np.sum(self.k * e))
        if lam < 0:
            s0 += _rescaled(_tail_moment(self.law, lam, 0.0), top)
            s1 += _rescaled(_tail_moment(self.law, lam, 1.0), top)
        elif self.law.tail is not None:
            s0 += _rescaled(self.law.tail_mass, top)
            s1 = math.inf
        return top, s0, s1

    def value(self, lam):
        top, s0, _ = self._parts(lam)
        return top + math.log(s0)

    def derivative(self, lam):
        _, s0, s1 = self._parts(lam)
        return s1 / s0


def rate_function_details(law, delta, lam_grid=None):
    """I(delta) = delta J(1/delta) with J(x) = sup_{lam <= 0} (lam x - Lambda(lam))."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if delta > 1.0 / law.d:
        return RateResult(delta, math.inf, math.inf, -math.inf, True, math.nan)
    x = 1.0 / delta
    L = _LogMGF(law)

    def obj(lam):
        return lam * x - L.value(lam)

    if lam_grid is None:
        lam_grid = -np.geomspace(1e-9, 1e3, 241)
    lams = np.concatenate([[0.0], np.sort(np.asarray(lam_grid, dtype=float))[::-1]])
    vals = np.array([obj(l) for l in lams])
    i = int(np.argmax(vals))
    if i == len(lams) - 1:
        # supremum approached as lam -> -inf: lam x - Lambda -> -log K(d) when x = d
        lam, val = lams[i], vals[i]
        return RateResult(delta, delta * val, val, lam, True, x - L.derivative(lam))
    if i == 0 and x - L.derivative(-1e-12) >= 0:
        return RateResult(delta, delta * vals[0], vals[0], 0.0, True, math.nan)
    a = lams[min(i + 1, len(lams) - 1)]
    b = lams[max(i - 1, 0)]
    res = minimize_scalar(lambda l: -obj(l), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-14 * max(1.0, abs(a))})
    lam, val = float(res.x), -float(res.fun)
    if vals[i] > val:
        lam, val = float(lams[i]), float(vals[i])
    return RateResult(delta, delta * val, val, lam, lam == 0.0, x - L.derivative(lam))


def rate_function(law, delta, lam_grid=None):
    return rate_function_details(law, delta, lam_grid).I
