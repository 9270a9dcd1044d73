"""Compiled inner loops: convolution recursions and partition-function DPs."""
import math

import numpy as np
from numba import njit
from scipy.fft import irfft, next_fast_len, rfft

# Blocks at or below this size are solved by the direct recursion.
CDQ_BASE = 512
# Tables whose kernel support is at most this long use the direct recursion.
DIRECT_SUPPORT = 4096


@njit(cache=True, nogil=True)
def _direct_block(x, a, lo, hi, support):
    # x[n] += sum_{lo <= j < n, n - j <= support} x[j] a[n - j]
    for n in range(lo, hi):
        s = x[n]
        j0 = max(lo, n - support)
        for j in range(j0, n):
            s += x[j] * a[n - j]
        x[n] = s


def solve_causal(b, a):
    """Solve x[n] = b[n] + sum_{0 <= j < n} x[j] a[n-j] for n = 0..len(b)-1.

    ``a[0]`` is ignored.  Short kernels use the direct O(M * support)
    recursion; long ones use divide-and-conquer with FFT products,
    O(M log^2 M), whose absolute rounding error is of order 1e-16 times the
    largest entry.
    """
    x = np.array(b, dtype=float)
    a = np.asarray(a, dtype=float)
    M = len(x)
    nz = np.flatnonzero(a[1:])
    support = int(nz[-1]) + 1 if len(nz) else 0
    if support == 0:
        return x
    if support <= DIRECT_SUPPORT or M <= 2 * DIRECT_SUPPORT:
        _direct_block(x, a, 0, M, support)
        return x
    a_pad = np.zeros(M)
    a_pad[: min(M, len(a))] = a[: min(M, len(a))]

    def solve(lo, hi):
        if hi - lo <= CDQ_BASE:
            _direct_block(x, a_pad, lo, hi, hi - lo)
            return
        mid = (lo + hi) // 2
        solve(lo, mid)
        L = next_fast_len((mid - lo) + (hi - lo))
        conv = irfft(rfft(x[lo:mid], L) * rfft(a_pad[: hi - lo], L), L)
        x[mid:hi] += conv[mid - lo: hi - lo]
        solve(mid, hi)

    solve(0, M)
    return x


@njit(cache=True, nogil=True)
def _logu(diff, logu_table, logC, e, logr):
    M = logu_table.shape[0] - 1
    if diff <= M:
        return logu_table[diff]
    d = float(diff)
    return logC - e * math.log(d) + d * logr


@njit(cache=True, nogil=True)
def mayer_dp(points, logu_table, logC, e, logr, logz):
    """Log-domain B(j) = u(s_j) + z sum_{k<j} B(k) u(s_j - s_k), j = 1..N.

    Returns the array logB with logB[0] unused (-inf).
    """
    N = points.shape[0] - 1
    logB = np.full(N + 1, -np.inf)
    terms = np.empty(N + 1)
    for j in range(1, N + 1):
        sj = points[j]
        first = _logu(sj, logu_table, logC, e, logr)
        m = first
        if logz > -np.inf:
            for k in range(1, j):
                t = logB[k] + _logu(sj - points[k], logu_table, logC, e, logr)
                terms[k] = t
                if t > m:
                    m = t
        if m == -np.inf:
            continue
        s = math.exp(first - m) if first > -np.inf else 0.0
        if logz > -np.inf:
            acc = 0.0
            for k in range(1, j):
                if terms[k] > -np.inf:
                    acc += math.exp(terms[k] - m)
            s += math.exp(logz) * acc
        logB[j] = m + math.log(s)
    return logB


@njit(cache=True, nogil=True)
def path_dp(K, weights, steps):
    """Rows V_r(x) = w(x) sum_k K[k] V_{r-1}(x-k), V_0 = delta_0, r = 1..steps.

    ``K`` and ``weights`` are indexed by position 0..X.  Rows are rescaled to
    unit maximum; returns (last row, log of accumulated scale).
    """
    X = weights.shape[0] - 1
    prev = np.zeros(X + 1)
    prev[0] = 1.0
    cur = np.zeros(X + 1)
    logscale = 0.0
    kmax = min(K.shape[0] - 1, X)
    for r in range(1, steps + 1):
        top = 0.0
        for x in range(X + 1):
            s = 0.0
            for k in range(1, min(kmax, x) + 1):
                s += K[k] * prev[x - k]
            s *= weights[x]
            cur[x] = s
            if s > top:
                top = s
        if top == 0.0:
            return cur, -np.inf
        for x in range(X + 1):
            prev[x] = cur[x] / top
        logscale += math.log(top)
    return prev, logscale


@njit(cache=True, nogil=True)
def gaps_from_uniforms(cdf, U, tail_code):
    """Inverse-CDF lookup on a table; entries beyond the table get ``tail_code``."""
    out = np.empty(U.shape[0], dtype=np.int64)
    M = cdf.shape[0]
    top = cdf[M - 1]
    for i in range(U.shape[0]):
        u = U[i]
        if u >= top:
            out[i] = tail_code
            continue
        lo, hi = 0, M - 1
        while lo < hi:
            mid = (lo + hi) >> 1
            if cdf[mid] > u:
                hi = mid
            else:
                lo = mid + 1
        out[i] = lo + 1
    return out


@njit(cache=True, nogil=True)
def count_sums_below(cdf, n, limit, samples, seed):
    """Number of walks with n table gaps whose sum stays <= limit.

    Gaps falling outside the table exceed ``limit`` by construction.
    """
    np.random.seed(seed)
    M = cdf.shape[0]
    top = cdf[M - 1]
    hits = 0
    for _ in range(samples):
        s = 0
        ok = True
        for _i in range(n):
            u = np.random.random()
            if u >= top:
                ok = False
                break
            lo, hi = 0, M - 1
            while lo < hi:
                mid = (lo + hi) >> 1
                if cdf[mid] > u:
                    hi = mid
                else:
                    lo = mid + 1
            s += lo + 1
            if s > limit:
                ok = False
                break
        if ok:
            hits += 1
    return hits
