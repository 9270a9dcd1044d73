"""Quenched disorder and exact partition functions of the pinning model.

The constrained and free partition functions come from the Mayer expansion
exp(beta H) = prod (1 + z 1{sigma_j in tau}), z = e^beta - 1, which gives

    B(j) = u(sigma_j) + z sum_{k<j} B(k) u(sigma_j - sigma_k),
    Z = e^beta B(N),    Z_free = 1 + z sum_j B(j).

Both are evaluated in the log domain.  Balanced and elastic variants use a
two-dimensional path DP over (position, number of renewals).
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from ._kernels import mayer_dp, path_dp
from .dist import sample_gaps, typical_scale
from .errors import BudgetExceeded, ImpossibleEvent, UnsupportedCase
from .rng import derive_seed, make_rng, ordered_map

CONSTRAINED, FREE, BALANCED, ELASTIC = "constrained", "free", "balanced", "elastic"
VARIANTS = (CONSTRAINED, FREE, BALANCED, ELASTIC)
SPATIAL_BUDGET = 10_000
BRUTE_FORCE_HORIZON = 20


@dataclass(frozen=True, eq=False)
class Disorder:
    points: np.ndarray
    seed: int = None
    label: str = ""

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.int64)
        if p[0] != 0 or np.any(np.diff(p) <= 0):
            raise ValueError("disorder points must start at 0 and increase strictly")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def N(self):
        return len(self.points) - 1

    @property
    def end(self):
        return int(self.points[-1])

    def shifted(self, start):
        """theta^start sigma: the points from index ``start`` on, recentred."""
        return Disorder(self.points[start:] - self.points[start], self.seed, self.label)

    def prefix(self, n):
        return Disorder(self.points[: n + 1], self.seed, self.label)


@dataclass(frozen=True)
class PartitionResult:
    logZ: float
    variant: str
    beta: float
    N: int
    meta: dict = field(default_factory=dict)


def sample_disorder(law_sigma, N, seed):
    """sigma_0 = 0 < sigma_1 < ... < sigma_N from N independent gaps."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = make_rng(seed, "disorder")
    cap = (2**62) // N
    gaps = sample_gaps(law_sigma, rng, N, cap=cap)
    points = np.concatenate([[0], np.cumsum(gaps)])
    return Disorder(points, int(seed), law_sigma.label)


def _mayer(disorder, u_tau, beta):
    if beta < 0:
        raise ValueError("beta must be >= 0")
    t = u_tau.tail
    logC = math.log(t.C) if t.C > 0 else -math.inf
    logz = math.log(math.expm1(beta)) if beta > 0 else -math.inf
    return mayer_dp(disorder.points, u_tau.log_table, logC, t.e, math.log(t.r), logz), logz


def log_partition_path(disorder, u_tau, beta):
    """log Z_{j,beta} for every prefix j = 1..N (index 0 unused)."""
    logB, _ = _mayer(disorder, u_tau, beta)
    return beta + logB


def partition_constrained(disorder, u_tau, beta, strict=False):
    logB, _ = _mayer(disorder, u_tau, beta)
    logZ = beta + logB[-1]
    if strict and logZ == -math.inf:
        raise ImpossibleEvent("sigma_N cannot be reached by tau")
    return PartitionResult(float(logZ), CONSTRAINED, beta, disorder.N)


def partition_free(disorder, u_tau, beta):
    logB, logz = _mayer(disorder, u_tau, beta)
    if logz == -math.inf:
        return PartitionResult(0.0, FREE, beta, disorder.N)
    s = logsumexp(logB[1:]) + logz
    return PartitionResult(float(np.logaddexp(0.0, s)), FREE, beta, disorder.N)


def _contact_weights(disorder, X, beta):
    w = np.ones(X + 1)
    pts = disorder.points[1:]
    pts = pts[pts <= X]
    w[pts] = math.exp(beta)
    w[0] = 0.0
    return w


def partition_balanced(disorder, law_tau, beta, budget=SPATIAL_BUDGET, strict=False):
    """log of E[exp(beta |tau ^ sigma|) ; tau_N = sigma_N]."""
    X = disorder.end
    if X > budget:
        raise BudgetExceeded(f"sigma_N = {X} exceeds the spatial budget {budget}")
    K = law_tau.table(X)
    row, logscale = path_dp(K, _contact_weights(disorder, X, beta), disorder.N)
    logZ = logscale + math.log(row[X]) if row[X] > 0 and logscale > -math.inf else -math.inf
    if strict and logZ == -math.inf:
        raise ImpossibleEvent("no N-step path ends at sigma_N")
    return PartitionResult(float(logZ), BALANCED, beta, disorder.N)


def default_elastic_horizon(disorder, law_tau):
    try:
        b = typical_scale(law_tau, disorder.N)
    except UnsupportedCase:
        b = 0.0
    return int(max(4 * disorder.end, math.ceil(20 * b)))


def partition_elastic(disorder, law_tau, beta, x_max=None, budget=SPATIAL_BUDGET):
    """log of E[exp(beta |tau ^ sigma| up to tau_N)], truncated at tau_N <= x_max.

    Contacts are counted at the listed disorder points only.  The neglected
    mass is bounded by exp(beta N) P(tau_N > x_max), reported in ``meta``.
    """
    if x_max is None:
        x_max = default_elastic_horizon(disorder, law_tau)
    x_max = int(x_max)
    if x_max < disorder.end:
        raise ValueError("x_max must be >= sigma_N")
    if x_max > budget:
        raise BudgetExceeded(f"x_max = {x_max} exceeds the spatial budget {budget}")
    K = law_tau.table(x_max)
    N = disorder.N
    row, logscale = path_dp(K, _contact_weights(disorder, x_max, beta), N)
    total = row.sum()
    logZ = logscale + math.log(total) if total > 0 and logscale > -math.inf else -math.inf
    w0 = np.ones(x_max + 1)
    w0[0] = 0.0
    row0, ls0 = path_dp(K, w0, N)
    reached = math.exp(ls0) * row0.sum() if ls0 > -math.inf else 0.0
    missing = max(0.0, 1.0 - reached)
    meta = {"x_max": x_max, "neglected_bound": math.exp(beta * N) * missing,
            "p_tail": missing}
    return PartitionResult(float(logZ), ELASTIC, beta, N, meta)


def brute_force_partition(disorder, law_tau, beta, variant, x_max=None):
    """Exhaustive sum over the renewal points of tau inside the horizon."""
    N = disorder.N
    H = disorder.end if variant != ELASTIC else int(x_max if x_max is not None else disorder.end)
    if H > BRUTE_FORCE_HORIZON:
        raise BudgetExceeded(f"horizon {H} exceeds {BRUTE_FORCE_HORIZON}")
    if variant == ELASTIC and H < disorder.end:
        raise ValueError("x_max must be >= sigma_N")
    with np.errstate(divide="ignore"):
        logK = np.log(law_tau.table(H))
    is_contact = np.zeros(H + 1, dtype=bool)
    pts = disorder.points[1:]
    is_contact[pts[pts <= H]] = True
    masks = np.arange(1 << H, dtype=np.int64)
    logw = np.zeros(len(masks))
    last = np.zeros(len(masks), dtype=np.int64)
    count = np.zeros(len(masks), dtype=np.int64)
    contacts = np.zeros(len(masks), dtype=np.int64)
    for x in range(1, H + 1):
        on = ((masks >> (x - 1)) & 1).astype(bool)
        logw[on] += logK[x - last[on]]
        last[on] = x
        count[on] += 1
        if is_contact[x]:
            contacts[on] += 1
    if variant == CONSTRAINED:
        keep = last == H
    elif variant == FREE:
        surv = np.array([law_tau.survival(k) + law_tau.escape for k in range(H + 1)])
        with np.errstate(divide="ignore"):
            logw = logw + np.log(surv[H - last])
        keep = np.ones(len(masks), dtype=bool)
    elif variant == BALANCED:
        keep = (last == H) & (count == N)
    elif variant == ELASTIC:
        keep = count == N
    else:
        raise ValueError(f"unknown variant {variant!r}")
    terms = logw[keep] + beta * contacts[keep]
    logZ = float(logsumexp(terms)) if len(terms) else -math.inf
    return PartitionResult(logZ, variant, beta, N, {"brute_force": True})


# ---------------------------------------------------------------------------
# Monte Carlo over disorder

@dataclass(frozen=True)
class FreeEnergyEstimate:
    mean: float
    stderr: float
    values: np.ndarray
    seeds: tuple
    sigma_N: tuple
    logZ: tuple


def _replica(law_sigma, u_tau, beta, N, seed, i):
    s = derive_seed(seed, "replica", i)
    dis = sample_disorder(law_sigma, N, s)
    logZ = partition_constrained(dis, u_tau, beta).logZ
    return s, dis.end, logZ


def estimate_free_energy(law_sigma, u_tau, beta, N, replicas, seed, threads=1):
    """Mean of (1/N) log Z over independent disorders, with standard error."""
    if replicas < 2:
        raise ValueError("need at least two replicas")
    rows = ordered_map(lambda i: _replica(law_sigma, u_tau, beta, N, seed, i),
                       range(replicas), threads)
    seeds, ends, logZ = zip(*rows)
    vals = np.asarray(logZ) / N
    se = float(vals.std(ddof=1) / math.sqrt(replicas))
    return FreeEnergyEstimate(float(vals.mean()), se, vals, seeds, ends, logZ)


@dataclass(frozen=True)
class FiniteVolumeCertificate:
    N: int
    lower_bound: float
    mean: float
    lcb: float
    stderr: float


@dataclass(frozen=True)
class FiniteVolumeScan:
    certificate: FiniteVolumeCertificate
    grid: tuple
    means: tuple
    lcbs: tuple


def finite_volume_scan(law_sigma, u_tau, beta, N_grid, replicas, seed, threads=1,
                       level=0.95):
    """Lower confidence bounds of E log Z_N along the grid.

    One DP per replica yields log Z_j for every j <= max(grid), so the whole
    grid shares the disorders.
    """
    grid = [int(n) for n in N_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("N_grid must be increasing")
    Nmax = grid[-1]
    idx = np.asarray(grid)

    def one(i):
        dis = sample_disorder(law_sigma, Nmax, derive_seed(seed, "replica", i))
        return log_partition_path(dis, u_tau, beta)[idx]

    vals = np.array(ordered_map(one, range(replicas), threads))
    means = vals.mean(axis=0)
    ses = vals.std(axis=0, ddof=1) / math.sqrt(replicas)
    lcbs = means - norm.ppf(level) * ses
    cert = None
    for k, n in enumerate(grid):
        if lcbs[k] >= 1.0:
            cert = FiniteVolumeCertificate(n, 1.0 / n, float(means[k]), float(lcbs[k]),
                                           float(ses[k]))
            break
    return FiniteVolumeScan(cert, tuple(grid), tuple(means), tuple(lcbs))


def finite_volume_check(law_sigma, u_tau, beta, N_grid, replicas, seed, threads=1):
    """First N whose one-sided 95% lower bound of E log Z_N is >= 1, else None."""
    return finite_volume_scan(law_sigma, u_tau, beta, N_grid, replicas, seed, threads).certificate
