"""Annealed model: P(sigma_n in tau), F_ann(beta), beta_c^ann and beta_c^hom.

F_ann(beta) solves sum_{n>=1} exp(-F n) P(sigma_n in tau) = 1/(e^beta - 1)
when the left side at F = 0+ exceeds the right, and is 0 otherwise.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.optimize import brentq

from ._series import TailModel, fit_tail
from .dist import sample_gaps
from .errors import BudgetExceeded, DivergentSeries, InsufficientPoints
from .renewal import alpha_star, classify_recurrence, expected_intersection, intersection_gap_law
from .rng import make_rng

EXACT_MAX_N = 64
EXACT_LENGTH = 2**20
MC_CHUNK_GAPS = 2_000_000


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0
    lower: float = None
    upper: float = None
    method: str = ""


def _conv(a, b, L):
    n = next_fast_len(2 * L + 1)
    out = irfft(rfft(a, n) * rfft(b, n), n)[: L + 1]
    return np.clip(out, 0.0, None)


def _exact_powers(law_sigma, nmax, L):
    """Yield (n, p_n) with p_n the n-fold convolution truncated to [0, L]."""
    base = law_sigma.table(L)
    p = base.copy()
    yield 1, p
    for n in range(2, nmax + 1):
        p = _conv(p, base, L)
        yield n, p


def _beyond_average(law_sigma, u_tau, L):
    """E[u(X) | X > L] for one gap X: the one-big-jump continuation."""
    k = np.arange(L + 1, 4 * L + 1, dtype=float)
    Kk = law_sigma.pmf(k)
    uk = u_tau(k)
    mass = law_sigma.survival(L)
    if mass <= 0:
        return 0.0, 0.0
    near = float(np.sum(Kk * uk))
    far_mass = law_sigma.survival(4 * L)
    far_u = float(u_tau(4 * L + 1.0))
    avg = (near + far_mass * far_u) / mass
    top = float(np.max(uk)) if len(uk) else 0.0
    return avg, top


def _exact_estimate(n, p, law_sigma, u_tau, L, beyond):
    exact = float(np.dot(p, u_tau(np.arange(L + 1))))
    mass_out = max(0.0, (1.0 - law_sigma.escape) ** n - float(p.sum()))
    avg, top = beyond
    value = exact + mass_out * avg
    return Estimate(value, 0.0, exact, exact + mass_out * max(top, avg), "exact")


def prob_sigma_in_tau(law_sigma, u_tau, n, method="exact", samples=10_000, seed=0,
                      L=EXACT_LENGTH):
    """P(sigma_n in tau) = E[u(sigma_n)], by convolution (n <= 64) or Monte Carlo."""
    n = int(n)
    if n == 0:
        return Estimate(1.0, 0.0, 1.0, 1.0, "trivial")
    if method == "exact":
        if n > EXACT_MAX_N:
            raise BudgetExceeded(f"exact convolution limited to n <= {EXACT_MAX_N}")
        beyond = _beyond_average(law_sigma, u_tau, L)
        # binary powering keeps the number of long convolutions logarithmic
        result, base, k = None, law_sigma.table(L), n
        while k:
            if k & 1:
                result = base if result is None else _conv(result, base, L)
            k >>= 1
            if k:
                base = _conv(base, base, L)
        return _exact_estimate(n, result, law_sigma, u_tau, L, beyond)
    if method == "mc":
        m, se = prob_sigma_in_tau_grid(law_sigma, u_tau, [n], samples, seed)
        return Estimate(float(m[0]), float(se[0]), method="mc")
    raise ValueError(f"unknown method {method!r}")


def prob_sigma_in_tau_grid(law_sigma, u_tau, ns, samples, seed, power=1.0):
    """Monte Carlo E[u(sigma_n)^power] at every n in ``ns``, sharing paths.

    Returns (means, stderrs) aligned with ``ns``.
    """
    ns = np.asarray(ns, dtype=np.int64)
    nmax = int(ns.max())
    rng = make_rng(seed, "sigma-paths")
    rows = max(1, MC_CHUNK_GAPS // nmax)
    s1 = np.zeros(len(ns))
    s2 = np.zeros(len(ns))
    done = 0
    while done < samples:
        b = min(rows, samples - done)
        gaps = sample_gaps(law_sigma, rng, (b, nmax), as_float=True)
        pos = np.cumsum(gaps, axis=1)[:, ns - 1]
        v = u_tau(pos)
        if power != 1.0:
            v = v**power
        s1 += v.sum(axis=0)
        s2 += (v * v).sum(axis=0)
        done += b
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean**2, 0.0)
    return mean, np.sqrt(var / max(samples - 1, 1))


# ---------------------------------------------------------------------------
# the sequence psi(n) = P(sigma_n in tau)

@dataclass(frozen=True, eq=False)
class PsiSequence:
    """psi(n) for n = 1..H (``table[n]``, table[0] unused) and a tail model."""

    table: np.ndarray
    tail: TailModel
    stderr: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def H(self):
        return len(self.table) - 1

    def series(self, F, which="mid"):
        """sum_{n>=1} exp(-F n) psi(n); ``which`` selects the bracket side."""
        n = np.arange(1, self.H + 1, dtype=float)
        vals = self.table[1:]
        if self.stderr is not None and which != "mid":
            sign = 1.0 if which == "hi" else -1.0
            vals = np.maximum(vals + sign * 3.0 * self.stderr[1:], 0.0)
        head = float(np.sum(np.exp(-F * n) * vals))
        return head + self.tail.sum_from(self.H + 1, F, which)


def psi_sequence(law_tau, law_sigma, u_tau, horizon=1000, samples=20_000, seed=0,
                 n_exact=16, L=2**18):
    """Table of P(sigma_n in tau): exact convolution for n <= n_exact,
    Monte Carlo above, power tail with exponent 1 + alpha* beyond ``horizon``."""
    H = int(horizon)
    table = np.zeros(H + 1)
    se = np.zeros(H + 1)
    table[0] = 1.0
    n_exact = min(n_exact, H)
    beyond = _beyond_average(law_sigma, u_tau, L)
    for n, p in _exact_powers(law_sigma, n_exact, L):
        est = _exact_estimate(n, p, law_sigma, u_tau, L, beyond)
        table[n] = est.value
        se[n] = (est.upper - est.lower) / 6.0
    if H > n_exact:
        ns = np.arange(n_exact + 1, H + 1)
        m, s = prob_sigma_in_tau_grid(law_sigma, u_tau, ns, samples, seed)
        table[n_exact + 1:] = m
        se[n_exact + 1:] = s
    if law_tau.tail is None or law_sigma.tail is None:
        e = 0.0
    else:
        e = 1.0 + alpha_star(law_tau.tail.alpha, law_sigma.tail.alpha)
    lo = max(1, H // 10)
    tail = fit_tail(table[lo:], np.arange(lo, H + 1), e)
    meta = {"horizon": H, "samples": samples, "n_exact": n_exact, "seed": seed}
    return PsiSequence(table, tail, se, meta)


def annealed_free_energy(psit, beta):
    """Root F in (0, beta] of the annealed equation, or 0 below criticality."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if beta == 0:
        return 0.0
    target = 1.0 / math.expm1(beta)
    if psit.series(0.0) <= target:
        return 0.0
    hi = beta
    while psit.series(hi) > target:
        hi *= 2.0

    def g(t):
        return math.log(psit.series(math.exp(t))) - math.log(target)

    t_hi = math.log(hi)
    t_lo = t_hi - 1.0
    while g(t_lo) <= 0:
        t_lo -= 4.0
        if t_lo < -700:
            return 0.0
    t = brentq(g, t_lo, t_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(t)


def annealed_residual(psit, beta, F):
    target = 1.0 / math.expm1(beta)
    return abs(psit.series(F) - target) / target


# ---------------------------------------------------------------------------
# critical points

@dataclass(frozen=True)
class CriticalPoint:
    value: float
    lower: float
    upper: float
    method: str
    detail: dict = field(default_factory=dict)


def _beta_from_sum(S):
    return math.log1p(1.0 / S) if S > 0 else math.inf


def annealed_beta_c(law_tau, law_sigma, u_tau, u_sigma, horizon=None):
    """log(1 + 1/E|tau ^ sigma|), or 0 when the intersection is recurrent."""
    rep = classify_recurrence(law_tau, law_sigma)
    if rep.recurrent:
        return CriticalPoint(0.0, 0.0, 0.0, "recurrent", {"reason": rep.reason})
    s = expected_intersection(u_tau, u_sigma, horizon)
    return CriticalPoint(_beta_from_sum(s.value), _beta_from_sum(s.upper),
                         _beta_from_sum(s.lower), "series", {"E": s.value})


def homogeneous_beta_c(u_tau, u_sigma):
    """-log P((tau ^ sigma)_1 < inf), from the gap law of the intersection.

    The gap law q is recovered by renewal inversion on the table.  Beyond it
    q(n) = w(n) ((1 - F)^2 + B n^-kappa) with F = sum q solved self-consistently;
    B is fitted on the last decade and kappa = min(e - 1, 1) for a w tail
    n^-e.  The bracket varies kappa by a factor 2 and the tail constant.
    """
    if u_tau.law is not None and u_sigma.law is not None:
        rep = classify_recurrence(u_tau.law, u_sigma.law)
        if rep.recurrent:
            return CriticalPoint(0.0, 0.0, 0.0, "recurrent", {"reason": rep.reason})
    M = max(u_tau.M, u_sigma.M)
    n = np.arange(M + 1)
    w = u_tau(n) * u_sigma(n)
    w[0] = 1.0
    q = intersection_gap_law(w)
    FM = float(np.sum(q.probs))
    model = u_tau.tail.times(u_sigma.tail)
    if model.C == 0:
        return CriticalPoint(-math.log(FM), -math.log(FM), -math.log(FM), "inversion",
                             {"F_table": FM})
    if model.r == 1 and model.e <= 1:
        raise DivergentSeries("intersection tail is not summable")
    lo = max(1, M // 10)
    idx = np.arange(lo, M + 1)
    keep = w[lo:] > 0
    idx = idx[keep]
    ratio = q.probs[idx - 1] / w[idx]

    def solve(kappa, which):
        W = model.sum_from(M + 1, which=which)
        kmodel = TailModel(model.C, model.e + kappa, model.r, model.C_lo, model.C_hi)
        Wk = kmodel.sum_from(M + 1, which=which)
        X = idx.astype(float) ** -kappa

        def g(F):
            A = (1.0 - F) ** 2
            B = float(np.dot(X, ratio - A) / np.dot(X, X))
            return FM + A * W + B * Wk - F

        a, b = 0.0, 1.0 - 1e-15
        if g(a) * g(b) > 0:
            return FM
        return brentq(g, a, b, xtol=1e-15)

    kappa = min(model.e - 1.0, 1.0) if model.r == 1 else 1.0
    F = solve(kappa, "mid")
    alts = [solve(kappa * f, which) for f in (0.5, 1.0, 2.0) for which in ("lo", "hi")]
    beta = -math.log(F)
    betas = [-math.log(x) for x in alts] + [beta]
    return CriticalPoint(beta, min(betas), max(betas), "inversion",
                         {"F_table": FM, "F": F, "kappa": kappa})


# ---------------------------------------------------------------------------
# annealed curve and critical exponent

@dataclass(frozen=True)
class AnnealedSolution:
    beta_c_ann: float
    beta_c_bracket: tuple
    beta_c_hom: CriticalPoint
    curve: tuple
    alpha_star: float
    meta: dict = field(default_factory=dict)


def critical_beta_grid(beta_c, decades=3, per_decade=32, top=1.0):
    """beta_c + top * 10^-k for k over ``decades`` decades, geometric."""
    k = np.linspace(-decades, 0, decades * per_decade + 1)
    return beta_c + top * 10.0**k


def solve_annealed(law_tau, law_sigma, u_tau, u_sigma, betas=None, psit=None, **psi_kw):
    """Annealed critical point, F_ann curve and the alpha* exponent."""
    if psit is None:
        psit = psi_sequence(law_tau, law_sigma, u_tau, **psi_kw)
    S0 = psit.series(0.0)
    S_lo, S_hi = psit.series(0.0, "lo"), psit.series(0.0, "hi")
    bc = _beta_from_sum(S0) if math.isfinite(S0) else 0.0
    bracket = (_beta_from_sum(S_hi) if math.isfinite(S_hi) else 0.0,
               _beta_from_sum(S_lo) if math.isfinite(S_lo) else 0.0)
    hom = homogeneous_beta_c(u_tau, u_sigma)
    if betas is None:
        betas = critical_beta_grid(bc)
    curve = tuple((float(b), annealed_free_energy(psit, float(b))) for b in betas)
    a_star = alpha_star(law_tau.tail.alpha, law_sigma.tail.alpha) if (
        law_tau.tail is not None and law_sigma.tail is not None) else float("nan")
    return AnnealedSolution(bc, bracket, hom, curve, a_star, dict(psit.meta))


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    rms: float
    points: int
    expected: float


def critical_exponent_fit(solution, window):
    """Least-squares slope of log F_ann against log(beta - beta_c) in ``window``."""
    bc = solution.beta_c_ann
    lo, hi = window
    if lo <= bc:
        raise ValueError("window must lie strictly above beta_c")
    pts = [(b, F) for b, F in solution.curve if lo <= b <= hi and F > 0]
    if len(pts) < 8:
        raise InsufficientPoints(f"{len(pts)} curve points in window, need 8")
    x = np.log([b - bc for b, _ in pts])
    y = np.log([F for _, F in pts])
    slope, icpt = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    a = solution.alpha_star
    expected = math.inf if a == 0 else max(1.0, 1.0 / abs(a))
    return ExponentFit(float(slope), float(icpt), rms, len(pts), expected)
