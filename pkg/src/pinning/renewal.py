"""Renewal mass functions, the intersection renewal, recurrence criteria."""
from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum
import math

import numpy as np

from ._kernels import solve_causal
from ._series import TailModel, fit_tail, power_tail_sum
from .dist import Constant, LogPower, from_table, truncated_mean
from .errors import DivergentSeries, NegativeProbability, Undecidable, UnsupportedCase

MARGINAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MassFunction:
    """u(n) = P(n in tau): exact table for n <= M, fitted tail beyond."""

    table: np.ndarray
    tail: TailModel
    law: object = None

    @property
    def M(self):
        return len(self.table) - 1

    def __call__(self, n):
        n = np.asarray(n)
        nf = n.astype(float)
        out = np.zeros(n.shape)
        inside = nf <= self.M
        out[inside] = self.table[n[inside].astype(np.int64)]
        beyond = ~inside
        if np.any(beyond):
            out[beyond] = self.tail(nf[beyond])
        return out if out.ndim else float(out)

    @cached_property
    def log_table(self):
        with np.errstate(divide="ignore"):
            return np.log(self.table)

    def to_csv(self, path, nmax=None):
        nmax = self.M if nmax is None else min(nmax, self.M)
        with open(path, "w") as fh:
            fh.write("n,u\n")
            for i in range(nmax + 1):
                fh.write(f"{i},{float(self.table[i])!r}\n")


def tail_exponent(law):
    """Power exponent e of the u tail: 1 - alpha^1 for proper laws."""
    if law.tail is None:
        return 0.0
    if law.escape > 0:
        return 1.0 + law.tail.alpha
    return 1.0 - min(law.tail.alpha, 1.0)


def mass_function(law, M=None):
    """Solve u(n) = sum_k K(k) u(n-k), u(0) = 1, on 0..M and fit the tail."""
    M = law.M if M is None else int(M)
    if M < law.d:
        raise ValueError("table must reach the minimal gap")
    K = law.table(M)
    b = np.zeros(M + 1)
    b[0] = 1.0
    u = solve_causal(b, K)
    np.clip(u, 0.0, 1.0, out=u)
    u.setflags(write=False)
    lo = max(1, M // 10)
    n = np.arange(lo, M + 1)
    if law.tail is None and law.escape > 0:
        tail = fit_tail(u[lo:], n, 0.0, geometric=True)
    else:
        tail = fit_tail(u[lo:], n, tail_exponent(law))
    return MassFunction(u, tail, law)


def doney_asymptote(law, n):
    """Leading-order u(n) in the four regimes: alpha = 0, (0,1), 1, finite mean."""
    if law.tail is None:
        if law.escape > 0:
            raise UnsupportedCase("no asymptote for a defective table law")
        return 1.0 / law.mean
    if law.finite_mean:
        return 1.0 / law.mean
    alpha, phi = law.tail.alpha, law.tail.phi
    if alpha == 0:
        r = law.survival(n)
        return phi(float(n)) / (n * r * r)
    if alpha < 1:
        return alpha * math.sin(math.pi * alpha) / math.pi * n ** (alpha - 1) / phi(float(n))
    return 1.0 / truncated_mean(law, n)


def intersection_mass(u_tau, u_sigma, n):
    """P(n in tau and n in sigma) = u(n) u~(n)."""
    return u_tau(n) * u_sigma(n)


def intersection_gap_law(w, M=None):
    """Invert the renewal equation: q(n) = w(n) - sum_{k<n} q(k) w(n-k)."""
    w = np.asarray(w, dtype=float)
    M = len(w) - 1 if M is None else int(M)
    w = w[: M + 1]
    if w[0] != 1.0 or np.any(w < 0) or np.any(w > 1):
        raise ValueError("w must satisfy w(0)=1 and 0 <= w <= 1")
    b = w.copy()
    b[0] = 0.0
    q = solve_causal(b, -w)
    if q[1:].min() < -1e-9:
        raise NegativeProbability(f"q(n) = {q[1:].min()!r} < 0: inconsistent input")
    q = np.clip(q[1:], 0.0, None)
    return from_table(q, label=f"intersection(M={M})", escape=max(0.0, 1.0 - float(q.sum())))


def alpha_star(alpha, alpha_tilde):
    if alpha_tilde <= 0:
        raise ValueError("alpha_tilde must be > 0")
    a, at = min(alpha, 1.0), min(alpha_tilde, 1.0)
    return (1.0 - a - at) / at


# ---------------------------------------------------------------------------
# recurrence of tau ^ sigma

class Recurrence(Enum):
    Recurrent = "Recurrent"
    Transient = "Transient"
    MarginalRecurrent = "MarginalRecurrent"
    MarginalTransient = "MarginalTransient"


@dataclass
class RecurrenceReport:
    kind: Recurrence
    reason: str
    evidence: list = field(default_factory=list)

    @property
    def recurrent(self):
        return self.kind in (Recurrence.Recurrent, Recurrence.MarginalRecurrent)


def _log_exponent(phi):
    if isinstance(phi, Constant):
        return 0.0
    if isinstance(phi, LogPower):
        return phi.rho
    return None


def _partial_sums(term, kmax=6):
    out = []
    total = 0.0
    lo = 1
    for k in range(1, kmax + 1):
        hi = 10**k
        n = np.arange(lo, hi + 1, dtype=float)
        total += float(np.sum(term(n)))
        out.append((hi, total))
        lo = hi + 1
    return out


def classify_recurrence(law_tau, law_sigma):
    """Recurrence of the intersection of two independent renewals."""
    if law_tau.escape > 0 or law_sigma.escape > 0:
        return RecurrenceReport(Recurrence.Transient, "a defective renewal is finite")
    if law_tau.finite_mean or law_sigma.finite_mean:
        return RecurrenceReport(Recurrence.Recurrent,
                                "u -> 1/E[gap] > 0 for the finite-mean law")
    a, at = law_tau.tail.alpha, law_sigma.tail.alpha
    s = min(a, 1.0) + min(at, 1.0)
    if s > 1 + MARGINAL_TOL:
        return RecurrenceReport(Recurrence.Recurrent, f"alpha + alpha~ = {a + at} > 1")
    if s < 1 - MARGINAL_TOL:
        return RecurrenceReport(Recurrence.Transient, f"alpha + alpha~ = {a + at} < 1")
    phi, phit = law_tau.tail.phi, law_sigma.tail.phi
    if a > 0 and at > 0:
        rho, rhot = _log_exponent(phi), _log_exponent(phit)
        evidence = _partial_sums(lambda n: 1.0 / (n * phi(n) * phit(n)))
        if rho is None or rhot is None:
            raise Undecidable("marginal case with a tabulated slowly varying function")
        div = rho + rhot <= 1
        kind = Recurrence.MarginalRecurrent if div else Recurrence.MarginalTransient
        return RecurrenceReport(kind, f"sum 1/(n (log n)^{rho + rhot}) "
                                + ("diverges" if div else "converges"), evidence)
    # alpha = 0 paired with alpha = 1
    zero, one = (law_tau, law_sigma) if a == 0 else (law_sigma, law_tau)
    rho, rhot = _log_exponent(zero.tail.phi), _log_exponent(one.tail.phi)
    if not isinstance(zero.tail.phi, LogPower) or rhot is None:
        raise Undecidable("marginal alpha=0/alpha=1 case needs LogPower/Constant phi")
    # phi/(n mbar r^2) ~ 1/(n (log n)^(rho+2) mbar(n)), mbar ~ (log n)^(rhot+1)
    if rhot <= -1:
        div = rho + 2 <= 1
    else:
        div = rho + rhot + 3 <= 1
    kind = Recurrence.MarginalRecurrent if div else Recurrence.MarginalTransient
    return RecurrenceReport(kind, "alpha=0 / alpha=1 series criterion", [])


# ---------------------------------------------------------------------------
# expected intersection size

@dataclass(frozen=True)
class SeriesSum:
    value: float
    remainder: float
    partial: float
    lower: float
    upper: float
    horizon: int


def expected_intersection(u_tau, u_sigma, horizon=None):
    """E|tau ^ sigma| = sum_{n>=1} u(n) u~(n): exact to ``horizon``, modelled beyond."""
    if u_tau.law is not None and u_sigma.law is not None:
        try:
            rep = classify_recurrence(u_tau.law, u_sigma.law)
        except Undecidable:
            rep = None
        if rep is not None and rep.recurrent:
            raise DivergentSeries(f"intersection is {rep.kind.value}: {rep.reason}")
    Mt = max(u_tau.M, u_sigma.M)
    H = Mt if horizon is None else min(int(horizon), Mt)
    n = np.arange(1, Mt + 1)
    w = u_tau(n) * u_sigma(n)
    partial = float(np.sum(w[:H]))
    model = u_tau.tail.times(u_sigma.tail)
    if model.C == 0:
        return SeriesSum(partial, 0.0, partial, partial, partial, H)
    if model.r == 1 and model.e <= 1:
        raise DivergentSeries("product tail is not summable")
    mid = partial + float(np.sum(w[H:])) + model.sum_from(Mt + 1)
    # bracket: the product's normalized values beyond the horizon and the
    # tail model constants bound the unseen terms
    lo_n = max(H + 1, Mt // 10)
    idx = np.arange(min(H + 1, lo_n), Mt + 1)
    vals = w[idx - 1]
    keep = vals > 0
    norm = np.log(vals[keep]) + model.e * np.log(idx[keep]) - idx[keep] * math.log(model.r)
    cands_lo = [model.C_lo] + ([float(np.exp(norm.min()))] if keep.any() else [])
    cands_hi = [model.C_hi] + ([float(np.exp(norm.max()))] if keep.any() else [])
    rate = -math.log(model.r)
    lower = partial + power_tail_sum(min(cands_lo), model.e, H + 1, rate)
    upper = partial + power_tail_sum(max(cands_hi), model.e, H + 1, rate)
    lower, upper = min(lower, mid), max(upper, mid)
    return SeriesSum(mid, max(upper - mid, mid - lower), partial, lower, upper, H)
