"""Heavy-tailed inter-arrival laws K(n) = phi(n) n^-(1+alpha).

A law is an exact table of probabilities for n = 1..M plus an optional
regularly varying continuation beyond M, and an optional escape mass
(probability of an infinite gap) for defective laws.
"""
from dataclasses import dataclass, field
from functools import cached_property
import json
import math

import mpmath
import numpy as np
from scipy.optimize import brentq
from scipy.special import zeta as hurwitz_zeta

from ._kernels import gaps_from_uniforms
from .errors import CutoffTooSmall, InfeasibleMass, NonSummable, UnsupportedCase

DEFAULT_CUTOFF = 2**16
MIN_CUTOFF = 64
NORM_TOL = 1e-10
# direct summation length before Euler-Maclaurin takes over
_DIRECT = 4096


# ---------------------------------------------------------------------------
# slowly varying functions

@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("Constant requires c > 0")

    def __call__(self, n):
        return np.full(np.shape(n), float(self.c)) if np.ndim(n) else float(self.c)

    def scaled(self, k):
        return Constant(self.c * k)

    def to_dict(self):
        return {"kind": "Constant", "c": self.c}


@dataclass(frozen=True)
class LogPower:
    """c (1 + log n)^rho."""

    c: float
    rho: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("LogPower requires c > 0")

    def __call__(self, n):
        n = np.maximum(np.asarray(n, dtype=float), 1.0)
        out = self.c * (1.0 + np.log(n)) ** self.rho
        return out if out.ndim else float(out)

    def scaled(self, k):
        return LogPower(self.c * k, self.rho)

    def to_dict(self):
        return {"kind": "LogPower", "c": self.c, "rho": self.rho}


@dataclass(frozen=True)
class Tabulated:
    """Values on a grid, log-linear in log n between nodes, constant outside."""

    grid: tuple
    values: tuple

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or len(g) < 1:
            raise ValueError("grid and values must be 1-d of equal length")
        if np.any(np.diff(g) <= 0) or g[0] < 1:
            raise ValueError("grid must be increasing and >= 1")
        if np.any(v <= 0):
            raise ValueError("Tabulated values must be positive")
        object.__setattr__(self, "grid", tuple(float(x) for x in g))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def __call__(self, n):
        x = np.log(np.maximum(np.asarray(n, dtype=float), 1.0))
        out = np.exp(np.interp(x, np.log(self.grid), np.log(self.values)))
        return out if out.ndim else float(out)

    def scaled(self, k):
        return Tabulated(self.grid, tuple(v * k for v in self.values))

    @property
    def end(self):
        return self.grid[-1]

    def to_dict(self):
        return {"kind": "Tabulated", "grid": list(self.grid), "values": list(self.values)}


SlowlyVaryingSpec = (Constant, LogPower, Tabulated)


def phi_from_dict(d):
    kind = d["kind"]
    if kind == "Constant":
        return Constant(float(d["c"]))
    if kind == "LogPower":
        return LogPower(float(d["c"]), float(d["rho"]))
    if kind == "Tabulated":
        return Tabulated(tuple(d["grid"]), tuple(d["values"]))
    raise ValueError(f"unknown slowly varying kind {kind!r}")


def parse_phi(text):
    """Parse ``const:c``, ``logpow:c,rho`` (CLI shorthand)."""
    kind, _, args = text.partition(":")
    vals = [float(x) for x in args.split(",")] if args else []
    if kind in ("const", "constant") and len(vals) == 1:
        return Constant(vals[0])
    if kind in ("logpow", "logpower") and len(vals) == 2:
        return LogPower(vals[0], vals[1])
    raise ValueError(f"cannot parse slowly varying spec {text!r}")


# ---------------------------------------------------------------------------
# sums of phi(n) n^-s

def _direct_sum(phi, s, a, b):
    """sum_{n=a}^{b-1} phi(n) n^-s, chunked."""
    total = 0.0
    chunk = 1 << 20
    for lo in range(int(a), int(b), chunk):
        n = np.arange(lo, min(int(b), lo + chunk), dtype=float)
        total += float(np.sum(phi(n) * n ** (-s)))
    return total


def _logpower_derivs(phi, s, x):
    """f, f', f''' for f(x) = c (1+log x)^rho x^-s."""
    t = 1.0 + math.log(x)
    rho = phi.rho
    f = phi.c * t**rho * x ** (-s)
    h = rho / t - s
    g1 = h / x
    k = -rho / t**2 - h
    g2 = k / x**2
    g3 = (2 * rho / t**3 + rho / t**2 - 2 * k) / x**3
    return f, f * g1, f * (g1**3 + 3 * g1 * g2 + g3)


def _logpower_integral(phi, s, x0, x1=math.inf):
    """int_{x0}^{x1} c (1+log x)^rho x^-s dx via t = 1 + log x."""
    rho = phi.rho
    t0 = 1.0 + math.log(x0)
    t1 = math.inf if x1 == math.inf else 1.0 + math.log(x1)
    with mpmath.workdps(30):
        if s == 1:
            if rho == -1:
                val = mpmath.log(t1) - mpmath.log(t0) if t1 != math.inf else mpmath.inf
            elif t1 == math.inf:
                val = mpmath.inf if rho > -1 else -mpmath.power(t0, rho + 1) / (rho + 1)
            else:
                val = (mpmath.power(t1, rho + 1) - mpmath.power(t0, rho + 1)) / (rho + 1)
        elif s > 1:
            lam = s - 1
            upper = mpmath.inf if t1 == math.inf else lam * t1
            val = (mpmath.exp(lam) * mpmath.power(lam, -rho - 1)
                   * mpmath.gammainc(rho + 1, lam * t0, upper))
        else:
            if t1 == math.inf:
                return math.inf
            val = mpmath.quad(lambda t: t**rho * mpmath.exp((1 - s) * (t - 1)), [t0, t1])
        return float(phi.c * val)


def _const_derivs(c, s, x):
    f = c * x ** (-s)
    return f, -s * f / x, -s * (s + 1) * (s + 2) * f / x**3


def _const_integral(c, s, x0, x1=math.inf):
    if s == 1:
        return math.inf if x1 == math.inf else c * math.log(x1 / x0)
    if x1 == math.inf:
        return math.inf if s < 1 else c * x0 ** (1 - s) / (s - 1)
    return c * (x1 ** (1 - s) - x0 ** (1 - s)) / (1 - s)


def phi_power_sum(phi, s, a):
    """sum_{n >= a} phi(n) n^-s; ``inf`` if divergent."""
    a = int(max(a, 1))
    if isinstance(phi, Constant):
        return math.inf if s <= 1 else phi.c * float(hurwitz_zeta(s, a))
    if isinstance(phi, Tabulated):
        end = int(math.ceil(phi.end))
        head = _direct_sum(phi, s, a, end + 1) if a <= end else 0.0
        if s <= 1:
            return math.inf
        return head + phi.values[-1] * float(hurwitz_zeta(s, max(a, end + 1)))
    if s < 1 or (s == 1 and phi.rho >= -1):
        return math.inf
    b = max(a, _DIRECT)
    head = _direct_sum(phi, s, a, b)
    f, f1, f3 = _logpower_derivs(phi, s, float(b))
    return head + _logpower_integral(phi, s, float(b)) + f / 2 - f1 / 12 + f3 / 720


def phi_power_partial(phi, s, a, b):
    """sum_{n=a}^{b} phi(n) n^-s for integers a <= b."""
    a, b = int(max(a, 1)), int(b)
    if b < a:
        return 0.0
    if b - a < (1 << 22):
        return _direct_sum(phi, s, a, b + 1)
    if isinstance(phi, Tabulated) and phi.end > a + _DIRECT:
        mid = int(math.ceil(phi.end))
        return _direct_sum(phi, s, a, mid) + phi_power_partial(phi, s, mid, b)
    a2 = a + _DIRECT
    head = _direct_sum(phi, s, a, a2)
    if isinstance(phi, LogPower):
        integral = _logpower_integral(phi, s, float(a2), float(b))
        fa = _logpower_derivs(phi, s, float(a2))
        fb = _logpower_derivs(phi, s, float(b))
    else:
        c = phi.c if isinstance(phi, Constant) else phi.values[-1]
        integral = _const_integral(c, s, float(a2), float(b))
        fa = _const_derivs(c, s, float(a2))
        fb = _const_derivs(c, s, float(b))
    em = (fa[0] + fb[0]) / 2 + (fb[1] - fa[1]) / 12 - (fb[2] - fa[2]) / 720
    return head + integral + em


# ---------------------------------------------------------------------------
# gap laws

@dataclass(frozen=True)
class Tail:
    alpha: float
    phi: object

    def pmf(self, n):
        n = np.asarray(n, dtype=float)
        with np.errstate(over="ignore", under="ignore"):
            return self.phi(n) * n ** (-(1.0 + self.alpha))


@dataclass(frozen=True, eq=False)
class GapLaw:
    """probs[i] = K(i+1) for i < M; ``tail`` continues K beyond M."""

    probs: np.ndarray
    tail: Tail = None
    label: str = ""
    escape: float = 0.0
    meta: dict = field(default_factory=dict)
    d: int = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if np.any(p < 0):
            raise ValueError("negative probability in table")
        nz = np.flatnonzero(p)
        if len(nz) == 0 and self.tail is None:
            raise ValueError("law has no mass on finite gaps")
        object.__setattr__(self, "d", int(nz[0]) + 1 if len(nz) else self.M + 1)

    @property
    def M(self):
        return len(self.probs)

    @cached_property
    def K(self):
        """Table with K[0] = 0 so that K[n] is P(gap = n)."""
        return np.concatenate([[0.0], self.probs])

    @cached_property
    def tail_mass(self):
        if self.tail is None:
            return 0.0
        return phi_power_sum(self.tail.phi, 1.0 + self.tail.alpha, self.M + 1)

    @cached_property
    def total_mass(self):
        return float(np.sum(self.probs)) + self.tail_mass + self.escape

    @cached_property
    def _survival_table(self):
        # surv[n] = P(n < gap < inf) for n = 0..M
        rev = np.cumsum(self.probs[::-1])[::-1]
        return np.concatenate([rev, [0.0]]) + self.tail_mass

    @property
    def alpha(self):
        return None if self.tail is None else self.tail.alpha

    def pmf(self, n):
        """K(n) for integer n (vectorized); 0 for n < 1."""
        n = np.asarray(n)
        out = np.zeros(n.shape, dtype=float)
        nf = n.astype(float)
        inside = (nf >= 1) & (nf <= self.M)
        out[inside] = self.probs[n[inside].astype(np.int64) - 1]
        if self.tail is not None:
            beyond = nf > self.M
            out[beyond] = self.tail.pmf(nf[beyond])
        return out if out.ndim else float(out)

    def table(self, L):
        """K[0..L] as an array, extending with the tail if L > M."""
        if L <= self.M:
            return self.K[: L + 1].copy()
        ext = np.zeros(L + 1)
        ext[: self.M + 1] = self.K
        if self.tail is not None:
            ext[self.M + 1:] = self.tail.pmf(np.arange(self.M + 1, L + 1, dtype=float))
        return ext

    def survival(self, n):
        """P(n < gap < inf) for integer n >= 0 (escape mass excluded)."""
        n = int(n)
        if n <= self.M:
            return float(self._survival_table[max(n, 0)])
        if self.tail is None:
            return 0.0
        return phi_power_sum(self.tail.phi, 1.0 + self.tail.alpha, n + 1)

    @cached_property
    def mean(self):
        """E[gap]; ``inf`` if infinite or if the law is defective."""
        if self.escape > 0:
            return math.inf
        n = np.arange(1, self.M + 1, dtype=float)
        m = float(np.sum(n * self.probs))
        if self.tail is not None:
            m += phi_power_sum(self.tail.phi, self.tail.alpha, self.M + 1)
        return m

    @property
    def finite_mean(self):
        return math.isfinite(self.mean)

    @cached_property
    def dbar(self):
        """Least n with u(k) > 0 for all k >= n, or None if undetermined."""
        if self.probs[0] > 0:
            return 1
        L = 4096
        support = np.flatnonzero(self.probs[:L]) + 1
        if self.tail is not None and self.M < L:
            support = np.concatenate([support, np.arange(self.M + 1, L + 1)])
        reach = np.zeros(L + 1, dtype=bool)
        reach[0] = True
        for k in range(1, L + 1):
            s = support[support <= k]
            reach[k] = bool(np.any(reach[k - s]))
        holes = np.flatnonzero(~reach)
        if len(holes) == 0:
            return 1
        last = int(holes[-1])
        return last + 1 if last < L // 2 else None

    @cached_property
    def sampler(self):
        return _Sampler(self)

    def to_dict(self):
        runs = []
        p = self.probs
        i = 0
        while i < len(p):
            j = i
            while j + 1 < len(p) and p[j + 1] == p[i]:
                j += 1
            runs.append([float(p[i]), j - i + 1])
            i = j + 1
        tail = None
        if self.tail is not None:
            tail = {"alpha": self.tail.alpha, "phi": self.tail.phi.to_dict()}
        return {"label": self.label, "d": self.d, "M": self.M, "escape": self.escape,
                "probs": runs, "tail": tail}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        probs = np.concatenate([np.full(int(c), float(v)) for v, c in d["probs"]])
        if len(probs) != int(d["M"]):
            raise ValueError("run lengths do not add up to M")
        tail = None
        if d.get("tail"):
            tail = Tail(float(d["tail"]["alpha"]), phi_from_dict(d["tail"]["phi"]))
        return cls(probs, tail, d.get("label", ""), float(d.get("escape", 0.0)))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def from_table(probs, label="table", escape=None):
    """Table-only law; the escape mass defaults to 1 - sum(probs)."""
    probs = np.asarray(probs, dtype=float)
    if escape is None:
        escape = 1.0 - float(np.sum(probs))
        if escape < -NORM_TOL:
            raise ValueError("table mass exceeds 1")
        escape = max(escape, 0.0) if escape > NORM_TOL else 0.0
    return GapLaw(probs, None, label, float(escape))


def make_power_law(alpha, phi, M=DEFAULT_CUTOFF):
    """K(n) = phi'(n) n^-(1+alpha) with phi' = phi / Z normalized to mass 1."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if M < MIN_CUTOFF:
        raise CutoffTooSmall(f"cutoff M={M} is below {MIN_CUTOFF}")
    if alpha == 0 and not (isinstance(phi, LogPower) and phi.rho < -1):
        raise NonSummable("alpha = 0 needs phi = LogPower with rho < -1")
    Z = phi_power_sum(phi, 1.0 + alpha, 1)
    if not math.isfinite(Z):
        raise NonSummable("sum of phi(n) n^-(1+alpha) diverges")
    phi = phi.scaled(1.0 / Z)
    tail = Tail(float(alpha), phi)
    n = np.arange(1, M + 1, dtype=float)
    law = GapLaw(tail.pmf(n), tail, f"power(alpha={alpha}, phi={phi.to_dict()})")
    if abs(law.total_mass - 1.0) > NORM_TOL:
        raise NonSummable(f"normalization failed: mass {law.total_mass!r}")
    return law


def make_example_family(Nf, eps, alpha, phi, M=None):
    """K(1)=eps, K=2p/Nf on [Nf/2, Nf), K(n)=phi(n) n^-(1+alpha) for n >= Nf."""
    Nf = int(Nf)
    if Nf < 4 or Nf % 2:
        raise ValueError("Nf must be an even integer >= 4")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if M is None:
        M = max(DEFAULT_CUTOFF, 1 << int(math.ceil(math.log2(2 * Nf))))
    if M < max(Nf, MIN_CUTOFF):
        raise CutoffTooSmall("cutoff must be at least Nf and 64")
    tail_mass = phi_power_sum(phi, 1.0 + alpha, Nf)
    p = 1.0 - eps - tail_mass
    if not 0 < p < 1:
        raise InfeasibleMass(f"p = {p!r} outside (0, 1) for Nf={Nf}, eps={eps}")
    tail = Tail(float(alpha), phi)
    probs = np.zeros(M)
    probs[0] = eps
    probs[Nf // 2 - 1: Nf - 1] = 2.0 * p / Nf
    probs[Nf - 1:] = tail.pmf(np.arange(Nf, M + 1, dtype=float))
    label = f"family(Nf={Nf}, eps={eps}, alpha={alpha}, phi={phi.to_dict()}, p={p!r})"
    return GapLaw(probs, tail, label, meta={"Nf": Nf, "eps": eps, "p": p})


# ---------------------------------------------------------------------------
# sampling

class _Sampler:
    """Inverse-CDF lookup on the table, rejection from a Pareto envelope beyond.

    Beyond M a continuous envelope X = M V^(-1/a2) is rounded up, so
    q(n) = P(ceil X = n) = M^a2 ((n-1)^-a2 - n^-a2) >= a2 M^a2 n^-(a2+1); the
    draw is accepted with probability K(n) / (C q(n)) <= 1.  For alpha = 0 the
    same construction runs in t = 1 + log x with a Pareto law in t.
    """

    def __init__(self, law):
        self.law = law
        self.cdf = np.cumsum(law.probs)
        top = self.cdf[-1] if law.M else 0.0
        self.top = top
        self.p_tail = law.tail_mass
        tail = law.tail
        if tail is None:
            return
        M, alpha, phi = law.M, tail.alpha, tail.phi
        self.log_pareto = alpha == 0
        if self.log_pareto:
            self.tM = 1.0 + math.log(M)
            return
        a2 = alpha
        if isinstance(phi, LogPower) and phi.rho > 0:
            a2 = alpha / 2.0
        self.a2 = a2
        if isinstance(phi, Constant):
            sup = phi.c
        elif isinstance(phi, LogPower):
            x = M + 1.0
            if phi.rho > 0:
                x = max(x, math.exp(2.0 * phi.rho / alpha - 1.0))
            sup = phi(x) * x ** (a2 - alpha)
        else:
            g = np.asarray(phi.grid)
            cands = [phi(M + 1.0)] + [v for x, v in zip(g, phi.values) if x > M]
            sup = max(cands)
        self.sup = sup

    def _tail_draws(self, rng, count):
        law = self.law
        M = law.M
        out = np.empty(count)
        filled = 0
        while filled < count:
            need = count - filled
            V = rng.random(need)
            W = rng.random(need)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                if self.log_pareto:
                    rho = law.tail.phi.rho
                    t = self.tM * V ** (1.0 / (rho + 1.0))
                    n = np.ceil(np.exp(t - 1.0))
                    tn = 1.0 + np.log(n)
                    inner = (rho + 1.0) * np.log1p(np.log1p(-1.0 / n) / tn)
                    acc = (-rho - 1.0) / (n * tn * np.expm1(inner))
                else:
                    a2, alpha = self.a2, law.tail.alpha
                    n = np.ceil(M * V ** (-1.0 / a2))
                    n = np.maximum(n, M + 1.0)
                    f1 = law.tail.phi(n) * n ** (a2 - alpha) / self.sup
                    f2 = a2 / (n * np.expm1(-a2 * np.log1p(-1.0 / n)))
                    acc = f1 * f2
            acc = np.where(np.isfinite(n) & np.isfinite(acc), acc, 1.0)
            keep = n[W < acc]
            out[filled: filled + len(keep)] = keep
            filled += len(keep)
        return out

    def draw(self, rng, size, as_float=False, cap=2**62):
        """``size`` gaps; escapes map to ``inf`` (float) or ``cap`` (int64)."""
        size = int(size)
        U = rng.random(size)
        g = gaps_from_uniforms(self.cdf, U, -1)
        beyond = np.flatnonzero(g < 0)
        if as_float:
            out = g.astype(float)
        else:
            out = np.minimum(g, cap)
        if len(beyond) == 0:
            return out
        law = self.law
        Ub = U[beyond]
        if law.tail is not None and law.escape > 0:
            to_tail = Ub < self.top + self.p_tail
        elif law.tail is not None:
            to_tail = np.ones(len(beyond), dtype=bool)
        elif law.escape > 0:
            to_tail = np.zeros(len(beyond), dtype=bool)
        else:
            # rounding sliver above the table CDF of a proper table law
            last = int(np.flatnonzero(law.probs)[-1]) + 1
            out[beyond] = last
            return out
        tail_idx = beyond[to_tail]
        esc_idx = beyond[~to_tail]
        if len(tail_idx):
            vals = self._tail_draws(rng, len(tail_idx))
            if as_float:
                out[tail_idx] = vals
            else:
                out[tail_idx] = np.where(vals >= cap, cap, np.minimum(vals, cap)).astype(np.int64)
        if len(esc_idx):
            out[esc_idx] = np.inf if as_float else cap
        return out


def sample_gap(law, rng):
    """One gap drawn from ``law``."""
    return int(law.sampler.draw(rng, 1)[0])


def sample_gaps(law, rng, size, as_float=False, cap=2**62):
    """Vectorized draws; int64 saturates at ``cap``, float has no cap."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape))
    return law.sampler.draw(rng, n, as_float=as_float, cap=cap).reshape(shape)


# ---------------------------------------------------------------------------
# truncated mean and typical scale

def _truncated_mean_real(law, x):
    """E[gap ^ x] for real x >= 0 (escape counts as an infinite gap)."""
    k = int(math.floor(x))
    if k <= law.M:
        n = np.arange(1, k + 1, dtype=float)
        head = float(np.sum(n * law.probs[:k]))
    else:
        n = np.arange(1, law.M + 1, dtype=float)
        head = float(np.sum(n * law.probs))
        head += phi_power_partial(law.tail.phi, law.tail.alpha, law.M + 1, k)
    return head + x * (law.survival(k) + law.escape)


def truncated_mean(law, n):
    """m(n) = E[gap ^ n]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _truncated_mean_real(law, int(n))


def typical_scale(law, n):
    """b_n: solves b^alpha / phi(b) = n (alpha < 1), b / m(b) = n (alpha = 1),
    or n E[gap] for finite mean."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if law.escape > 0:
        raise UnsupportedCase("typical scale of a defective law")
    if law.finite_mean:
        return n * law.mean
    alpha, phi = law.tail.alpha, law.tail.phi
    if alpha == 0:
        raise UnsupportedCase("typical scale needs alpha > 0")
    logn = math.log(n)
    if alpha < 1:
        def f(t):
            return alpha * t - math.log(phi(math.exp(t))) - logn
    else:
        def f(t):
            return t - math.log(_truncated_mean_real(law, math.exp(t))) - logn
    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo -= 10.0
    while f(hi) < 0:
        hi += 10.0
    t = brentq(f, lo, hi, xtol=1e-13, rtol=1e-14)
    return math.exp(t)
