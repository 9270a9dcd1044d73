"""Disorder relevance: regime classifier, fractional-moment certificate and
the search for certified example laws."""
from dataclasses import asdict, dataclass, field
from enum import Enum
import math

import numpy as np

from ._series import power_tail_sum
from .dist import Constant, make_example_family, phi_power_sum, sample_gaps
from .errors import (BudgetExhausted, DivergentDenominator, DivergentSeries, EmptyWindow,
                     InfeasibleMass)
from .renewal import alpha_star, expected_intersection, mass_function
from .rng import derive_seed, make_rng, ordered_map

TOL = 1e-12
CHUNK_GAPS = 1_000_000


class Regime(Enum):
    EqualCriticalPoints = "EqualCriticalPoints"
    StrictShift = "StrictShift"
    OpenRegion = "OpenRegion"


def theorem11_classifier(alpha, alpha_tilde):
    """Regime of (alpha, alpha~) for the quenched versus annealed critical point."""
    if alpha_tilde <= 0:
        raise ValueError("alpha_tilde must be > 0")
    if alpha + alpha_tilde >= 1 - TOL:
        return Regime.EqualCriticalPoints
    if alpha_star(alpha, alpha_tilde) > 0.5 + TOL:
        return Regime.StrictShift
    return Regime.OpenRegion


def zeta_window(alpha, alpha_tilde):
    """Open interval (alpha~/(1-alpha), 1) of admissible fractional exponents."""
    if alpha >= 1:
        raise EmptyWindow("alpha must be < 1")
    lo = alpha_tilde / (1.0 - alpha)
    if lo >= 1:
        raise EmptyWindow(f"alpha~/(1-alpha) = {lo} >= 1")
    return (lo, 1.0)


def analytic_precheck(eps, zeta):
    """(2 eps^(1+zeta) + 2 eps^2) / (2 eps^2)^zeta; values >= 1 cannot certify."""
    return (2.0 * eps ** (1.0 + zeta) + 2.0 * eps**2) / (2.0 * eps**2) ** zeta


# ---------------------------------------------------------------------------
# certificate

CERTIFIED, INCONCLUSIVE = "Certified", "Inconclusive"


@dataclass(frozen=True)
class CertificateReport:
    zeta: float
    S: float
    stderr: float
    upper: float
    j_max: int
    samples: int
    numerator: float
    remainder: float
    decay_slope: float
    denominator: float
    denominator_lower: float
    verdict: str
    in_window: bool
    extrapolated: bool = True
    params: dict = field(default_factory=dict)

    @property
    def certified(self):
        return self.verdict == CERTIFIED

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = repr(v)
        return d


def _moment_chunk(law_sigma, u_tau, zeta, j_max, rows, seed):
    rng = make_rng(seed)
    gaps = sample_gaps(law_sigma, rng, (rows, j_max), as_float=True)
    v = u_tau(np.cumsum(gaps, axis=1)) ** zeta
    return v.sum(axis=0), v.sum(axis=1)


def fractional_moments(law_sigma, u_tau, zeta, j_max, samples, seed, threads=1):
    """Monte Carlo E[u(sigma_j)^zeta] for j = 1..j_max and per-path totals."""
    rows = max(1, CHUNK_GAPS // j_max)
    sizes = [min(rows, samples - s) for s in range(0, samples, rows)]
    parts = ordered_map(
        lambda k: _moment_chunk(law_sigma, u_tau, zeta, j_max, sizes[k],
                                derive_seed(seed, "certificate", k)),
        range(len(sizes)), threads)
    col = np.sum([p[0] for p in parts], axis=0) / samples
    totals = np.concatenate([p[1] for p in parts])
    return col, totals


def fractional_moment_certificate(law_tau, law_sigma, u_tau, zeta, j_max, samples, seed,
                                  u_sigma=None, threads=1):
    """S = sum_{j<=j_max} E[u(sigma_j)^zeta] / E|sigma ^ tau|^zeta plus a
    fitted power-law remainder (doubled) for j > j_max.

    Certified only if (numerator + 3 stderr + remainder) / lower(denominator)^zeta < 1.
    """
    if not 0 < zeta <= 1:
        raise ValueError("zeta must lie in (0, 1]")
    if u_sigma is None:
        u_sigma = mass_function(law_sigma, max(u_tau.M, law_sigma.M))
    try:
        den = expected_intersection(u_tau, u_sigma)
    except DivergentSeries as exc:
        raise DivergentDenominator(str(exc)) from exc
    col, totals = fractional_moments(law_sigma, u_tau, zeta, j_max, samples, seed, threads)
    num = float(totals.mean())
    se = float(totals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    lo = max(1, j_max // 10)
    j = np.arange(lo, j_max + 1, dtype=float)
    vals = col[lo - 1:]
    keep = vals > 0
    if keep.sum() >= 2:
        slope, icpt = np.polyfit(np.log(j[keep]), np.log(vals[keep]), 1)
    else:
        slope, icpt = -math.inf, -math.inf
    if slope >= -1:
        tail = math.inf
    elif not math.isfinite(slope):
        tail = 0.0
    else:
        tail = power_tail_sum(math.exp(icpt), -slope, j_max + 1)
    remainder = 2.0 * tail
    S = (num + tail) / den.value**zeta
    upper = (num + 3.0 * se + remainder) / den.lower**zeta
    try:
        a, at = law_tau.tail.alpha, law_sigma.tail.alpha
        wlo, whi = zeta_window(a, at)
        in_window = wlo < zeta < whi
    except (EmptyWindow, AttributeError):
        in_window = False
    verdict = CERTIFIED if upper < 1 else INCONCLUSIVE
    params = {"law_tau": law_tau.label, "law_sigma": law_sigma.label, "seed": seed,
              "M_tau": u_tau.M, "M_sigma": u_sigma.M}
    return CertificateReport(float(zeta), float(S), se, float(upper), int(j_max), int(samples),
                             num, float(remainder), float(slope), den.value, den.lower,
                             verdict, bool(in_window), True, params)


def exact_certificate_sum(u_tau, u_sigma, zeta):
    """sum_j E[u(sigma_j)^zeta] = sum_{m>=1} u(m)^zeta u~(m), from the tables."""
    M = max(u_tau.M, u_sigma.M)
    m = np.arange(1, M + 1)
    head = float(np.sum(u_tau(m) ** zeta * u_sigma(m)))
    model = u_tau.tail.power(zeta).times(u_sigma.tail)
    if model.C > 0 and model.r == 1 and model.e <= 1:
        return math.inf
    return head + model.sum_from(M + 1)


def exact_certificate_ratio(u_tau, u_sigma, zeta):
    """The certificate sum S evaluated without sampling."""
    den = expected_intersection(u_tau, u_sigma)
    return exact_certificate_sum(u_tau, u_sigma, zeta) / den.value**zeta


# ---------------------------------------------------------------------------
# search over the example family

@dataclass(frozen=True)
class SearchResult:
    Nf: int
    Nf_tilde: int
    eps: float
    zeta: float
    precheck: float
    report: CertificateReport
    evaluations: int
    phi: dict
    phi_tilde: dict

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("Nf", "Nf_tilde", "eps", "zeta", "precheck",
                                            "evaluations", "phi", "phi_tilde")}
        d["report"] = self.report.to_dict()
        return d


DEFAULT_GRID = {"eps": [0.02, 0.05, 0.1], "Nf_tilde": [400, 800, 1600, 3200],
                "zeta": None, "fill": 0.95, "j_max": 4000, "N_factor": 1.0}


def _grid_zetas(alpha, alpha_tilde, spec):
    if spec is not None:
        return [float(z) for z in spec]
    lo, hi = zeta_window(alpha, alpha_tilde)
    w = hi - lo
    return [lo + w / 2, lo + w / 4, lo + 3 * w / 4]


def family_cutoff(Nf):
    """Table length for family laws: a power of two at least 16 Nf."""
    return 1 << int(math.ceil(math.log2(16 * Nf)))


def fill_phi(alpha, Nf, eps, fill):
    """Constant phi whose tail from Nf carries ``fill`` of the mass 1 - eps."""
    return Constant(fill * (1.0 - eps) / phi_power_sum(Constant(1.0), 1.0 + alpha, Nf))


def search_example(alpha, alpha_tilde, phi=None, phi_tilde=None, grid=None, budget=1000,
                   samples=10_000, seed=0, threads=1, progress=None):
    """First Certified (eps, Nf~, zeta) of the lexicographic grid, with Nf set to
    the least even integer >= N_factor * 2 Nf~^(1/(1-alpha)).

    ``phi``/``phi_tilde`` of None select per-law constants from the ``fill``
    fraction of the grid.  Grid points whose pre-check is >= 1 or whose mass
    is infeasible are skipped without spending budget.  Returns None if the
    grid is exhausted; raises BudgetExhausted carrying the best result.
    """
    if not (alpha > 0 and alpha_tilde > 0 and alpha + alpha_tilde < 1):
        raise ValueError("need alpha, alpha~ > 0 and alpha + alpha~ < 1")
    g = dict(DEFAULT_GRID)
    if grid:
        unknown = set(grid) - set(g)
        if unknown:
            raise ValueError(f"unknown grid keys {sorted(unknown)}")
        g.update(grid)
    zetas = _grid_zetas(alpha, alpha_tilde, g["zeta"])
    wlo, _ = zeta_window(alpha, alpha_tilde)
    evaluations = 0
    best = None
    for eps in sorted(float(e) for e in g["eps"]):
        for Nt in sorted(int(n) for n in g["Nf_tilde"]):
            N = math.ceil(g["N_factor"] * 2.0 * Nt ** (1.0 / (1.0 - alpha)))
            N += N % 2
            Nt += Nt % 2
            live = [z for z in zetas if wlo < z < 1 and analytic_precheck(eps, z) < 1]
            if not live:
                continue
            ph = phi if phi is not None else fill_phi(alpha, N, eps, g["fill"])
            pht = phi_tilde if phi_tilde is not None else fill_phi(alpha_tilde, Nt, eps, g["fill"])
            M = family_cutoff(N)
            try:
                law_t = make_example_family(N, eps, alpha, ph, M)
                law_s = make_example_family(Nt, eps, alpha_tilde, pht, M)
            except InfeasibleMass:
                continue
            u_t = mass_function(law_t)
            u_s = mass_function(law_s)
            for z in live:
                if evaluations >= budget:
                    raise BudgetExhausted("certificate budget exhausted", best)
                evaluations += 1
                rep = fractional_moment_certificate(
                    law_t, law_s, u_t, z, g["j_max"], samples,
                    derive_seed(seed, "search", eps, Nt, z), u_s, threads)
                res = SearchResult(N, Nt, eps, z, analytic_precheck(eps, z), rep,
                                   evaluations, ph.to_dict(), pht.to_dict())
                if progress is not None:
                    progress(res)
                if best is None or rep.upper < best.report.upper:
                    best = res
                if rep.certified:
                    return res
    return None
