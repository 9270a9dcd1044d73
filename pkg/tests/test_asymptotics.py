import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pinning.asymptotics import (clopper_pearson_upper, fit_tail_exponent, log_grid,
                                 lower_tail_probe, rate_function, rate_function_details,
                                 verify_doney, verify_kstar)
from pinning.dist import Constant, from_table, make_power_law
from pinning.errors import NonPositiveValue


def geometric_law(p, kmax=200):
    k = np.arange(1, kmax + 1)
    return from_table(p * (1 - p) ** (k - 1.0))


def binomial_rate(p, d):
    return d * math.log(d / p) + (1 - d) * math.log((1 - d) / (1 - p))


def test_fit_recovers_power_with_log_correction():
    n = log_grid(1e3, 1e6, 40)
    v = 2.0 * n ** -1.5 * (1 + np.log(n)) ** 0.3
    fit = fit_tail_exponent(np.column_stack([n, v]))
    assert -1.6 < fit.slope < -1.35
    assert fit.decades == pytest.approx(3.0, abs=1e-3)


def test_fit_constant_sequence():
    n = log_grid(10, 1e4, 12)
    fit = fit_tail_exponent(np.column_stack([n, np.full(len(n), 0.25)]))
    assert abs(fit.slope) < 1e-12
    assert fit.rms < 1e-12


def test_fit_rejects_nonpositive_and_short_input():
    n = log_grid(10, 1e4, 12).astype(float)
    v = n ** -1.0
    v[3] = 0.0
    with pytest.raises(NonPositiveValue):
        fit_tail_exponent(np.column_stack([n, v]))
    with pytest.raises(ValueError):
        fit_tail_exponent([(1, 1), (2, 0.5)])


def test_log_grid_distinct_and_bounded():
    g = log_grid(100, 10_000, 9)
    assert g[0] == 100 and g[-1] == 10_000
    assert np.all(np.diff(g) > 0)


def test_doney_ratio_half(law, u_of):
    rep = verify_doney(law(0.5), 2**16, u=u_of(0.5))
    assert np.all((rep.ratio > 0.85) & (rep.ratio < 1.15))
    assert abs(rep.fit.slope + 0.5) < 0.1


def test_doney_finite_mean():
    lw = make_power_law(3.0, Constant(1.0), 2**14)
    rep = verify_doney(lw, 2**14)
    assert rep.max_deviation < 1e-4


def test_doney_slope_alpha_08(law, u_of):
    rep = verify_doney(law(0.8), 2**16, window=(1000, 60_000), u=u_of(0.8))
    assert abs(rep.fit.slope + 0.2) < 0.1


def test_doney_needs_long_table(law):
    with pytest.raises(ValueError):
        verify_doney(law(0.5), 1000)


def test_kstar_slope_small_sample(law, u_of):
    rep = verify_kstar(law(0.2), law(0.5), log_grid(100, 3000, 8), 20_000, 1, u_of(0.2))
    assert rep.expected == pytest.approx(-1.6)
    assert abs(rep.fit.slope - rep.expected) < 0.25
    assert np.all(rep.stderr >= 0)


def test_lower_tail_deterministic_law():
    lw = from_table([1.0])
    for eps in (0.1, 0.5, 0.99):
        t = lower_tail_probe(lw, 500, eps, 1000, 0)
        assert t.hits == 0 and t.frequency == 0.0


def test_lower_tail_control_and_reproducibility(law):
    a = lower_tail_probe(law(0.5), 1000, 0.9, 20_000, 3)
    b = lower_tail_probe(law(0.5), 1000, 0.9, 20_000, 3)
    assert a == b
    assert a.hits > 0
    assert a.frequency <= a.upper <= 1


def test_lower_tail_monotone_in_n(law):
    small = lower_tail_probe(law(0.5), 100, 0.3, 40_000, 5)
    big = lower_tail_probe(law(0.5), 2000, 0.3, 40_000, 5)
    p, q = small.frequency, big.frequency
    se = math.sqrt((p * (1 - p) + q * (1 - q)) / 40_000)
    assert q <= p + 3 * se


def test_clopper_pearson():
    assert clopper_pearson_upper(0, 100_000) == pytest.approx(1 - 0.05 ** (1 / 100_000))
    assert clopper_pearson_upper(5, 5) == 1.0
    assert clopper_pearson_upper(10, 100) > 0.1


def test_rate_binomial_closed_form():
    I = rate_function(geometric_law(0.5), 0.75)
    assert abs(I - (0.75 * math.log(1.5) + 0.25 * math.log(0.5))) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.05, 0.95))
def test_rate_binomial_family(p, frac):
    d = p + frac * (1 - p)
    if d >= 0.999:
        return
    assert rate_function(geometric_law(p, 400), d) == pytest.approx(binomial_rate(p, d),
                                                                   abs=1e-8)


def test_rate_zero_below_mean_density():
    # contact fraction at or below 1/E[gap] costs nothing
    assert rate_function(geometric_law(0.5), 0.3) == pytest.approx(0.0, abs=1e-12)


def test_rate_deterministic_law():
    lw = from_table([1.0])
    for d in (0.2, 0.5, 1.0):
        assert rate_function(lw, d) == pytest.approx(0.0, abs=1e-12)
    assert rate_function(lw, 1.2) == math.inf


def test_rate_infinite_beyond_min_gap():
    lw = from_table([0.0, 0.4, 0.6])
    assert rate_function(lw, 0.6) == math.inf
    assert math.isfinite(rate_function(lw, 0.5))
    with pytest.raises(ValueError):
        rate_function(lw, 0.0)


@pytest.mark.parametrize("alpha", [0.3, 0.6])
def test_rate_convex_nondecreasing(law, alpha):
    lw = law(alpha)
    ds = np.linspace(0.02, 0.98, 25)
    I = np.array([rate_function(lw, d) for d in ds])
    assert np.all(np.isfinite(I))
    assert np.all(np.diff(I) >= -1e-10)
    assert np.all(I[:-2] - 2 * I[1:-1] + I[2:] >= -1e-8)


@pytest.mark.parametrize("delta", [0.05, 0.3, 0.7, 0.95])
def test_rate_duality_residual(law, delta):
    r = rate_function_details(law(0.4), delta)
    assert r.boundary or abs(r.derivative) < 1e-6


def test_rate_vanishes_at_zero_density(law):
    lw = law(0.5)
    vals = [rate_function(lw, d) for d in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-2


def test_rate_defective_law():
    lw = from_table([0.3, 0.2], escape=0.5)
    r = rate_function(lw, 0.9)
    assert math.isfinite(r) and r > 0
    # escape mass only raises the cost relative to the renormalized law
    assert r >= rate_function(from_table([0.6, 0.4]), 0.9) - 1e-12
