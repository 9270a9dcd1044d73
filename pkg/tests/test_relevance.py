import math

import numpy as np
import pytest

from pinning.dist import from_table, make_example_family
from pinning.errors import BudgetExhausted, DivergentDenominator, EmptyWindow
from pinning.relevance import (Regime, analytic_precheck, exact_certificate_ratio,
                               exact_certificate_sum, family_cutoff, fill_phi,
                               fractional_moment_certificate, search_example,
                               theorem11_classifier, zeta_window)
from pinning.renewal import expected_intersection, mass_function


@pytest.mark.parametrize("a,at,regime", [
    (0.6, 0.6, Regime.EqualCriticalPoints),
    (0.5, 0.5, Regime.EqualCriticalPoints),
    (0.2, 0.3, Regime.StrictShift),
    (0.3, 0.5, Regime.OpenRegion),
    (0.4, 0.4, Regime.OpenRegion),
    (0.4, 0.3, Regime.StrictShift),
])
def test_classifier(a, at, regime):
    assert theorem11_classifier(a, at) is regime


def test_classifier_matches_equivalent_condition():
    for a in np.linspace(0.01, 0.99, 23):
        for at in np.linspace(0.01, 0.99, 23):
            r = theorem11_classifier(a, at)
            if a + at < 1 - 1e-9:
                assert (r is Regime.StrictShift) == (a + 1.5 * at < 1 - 1e-9) or \
                    abs(a + 1.5 * at - 1) < 1e-9


def test_zeta_window():
    assert zeta_window(0.5, 0.3) == pytest.approx((0.6, 1.0))
    assert zeta_window(0.3, 0.5) == pytest.approx((5 / 7, 1.0))
    with pytest.raises(EmptyWindow):
        zeta_window(0.5, 0.6)


def test_analytic_precheck():
    assert analytic_precheck(1e-3, 0.8) < 1
    assert analytic_precheck(0.4, 0.75) >= 1
    eps, z = 0.05, 0.8
    assert analytic_precheck(eps, z) == pytest.approx(
        (2 * eps**1.8 + 2 * eps**2) / (2 * eps**2) ** 0.8)


def test_zeta_one_identity(law, u_of):
    r = fractional_moment_certificate(law(0.3), law(0.3), u_of(0.3), 0.999, 1000, 10_000,
                                      1, u_of(0.3))
    assert 0.9 <= r.S <= 1.1
    assert exact_certificate_ratio(u_of(0.3), u_of(0.3), 1.0) == pytest.approx(1.0, rel=1e-12)


def test_exact_sum_matches_monte_carlo(law, u_of):
    zeta = 0.8
    r = fractional_moment_certificate(law(0.2), law(0.5), u_of(0.2), zeta, 2000, 10_000, 2,
                                      u_of(0.5))
    exact = exact_certificate_sum(u_of(0.2), u_of(0.5), zeta)
    est = r.numerator + r.remainder / 2
    assert abs(est - exact) < 4 * r.stderr + r.remainder


def test_geometric_toy_closed_form():
    p, zeta = 0.6, 0.7
    law = from_table([p])
    u = mass_function(law, 400)
    r = fractional_moment_certificate(law, law, u, zeta, 200, 20_000, 3, u)
    x = p ** (1 + zeta)
    S = (x / (1 - x)) / (p * p / (1 - p * p)) ** zeta
    assert abs(r.S - S) < 3 * r.stderr / r.denominator**zeta + 1e-12
    assert not r.in_window


def test_recurrent_pair_rejected(law, u_of):
    with pytest.raises(DivergentDenominator):
        fractional_moment_certificate(law(0.6), law(0.6), u_of(0.6), 0.9, 10, 10, 0, u_of(0.6))


def test_report_serializes(law, u_of):
    r = fractional_moment_certificate(law(0.2), law(0.3), u_of(0.2), 0.5, 100, 500, 0,
                                      u_of(0.3))
    d = r.to_dict()
    assert d["verdict"] in ("Certified", "Inconclusive")
    assert d["extrapolated"] is True
    assert (r.verdict == "Certified") == (r.upper < 1)


def test_strict_shift_pair_certificate(law, u_of):
    # (0.2, 0.3) lies in the strict-shift region; the unmodified laws either
    # certify or stay below 1.5
    lo, _ = zeta_window(0.2, 0.3)
    reports = [fractional_moment_certificate(law(0.2), law(0.3), u_of(0.2), z, 2000,
                                             10_000, 4, u_of(0.3))
               for z in (lo + (1 - lo) * f for f in (0.25, 0.5, 0.75))]
    assert all(r.in_window for r in reports)
    assert any(r.certified for r in reports) or min(r.S for r in reports) < 1.5


def test_family_denominator_and_mass_function_bound():
    eps, a, at, Nt = 0.05, 0.3, 0.5, 200
    N = math.ceil(2 * Nt ** (1 / (1 - a)))
    N += N % 2
    M = family_cutoff(N)
    lt = make_example_family(N, eps, a, fill_phi(a, N, eps, 0.95), M)
    ls = make_example_family(Nt, eps, at, fill_phi(at, Nt, eps, 0.95), M)
    ut, us = mass_function(lt), mass_function(ls)
    assert expected_intersection(ut, us).value >= eps**2
    m = np.arange(N // 2, N + 1)
    c = float(np.max(ut(m)) * N)
    assert c < 10


def test_search_skips_hopeless_points_without_budget():
    # eps = 0.4 fails the pre-check for every zeta in the window
    assert search_example(0.3, 0.5, grid={"eps": [0.4], "Nf_tilde": [100]}, budget=1) is None


def test_search_budget_exhaustion_reports_best():
    with pytest.raises(BudgetExhausted) as info:
        search_example(0.3, 0.5, grid={"eps": [0.05], "Nf_tilde": [100], "j_max": 200,
                                           "zeta": [0.76, 0.78]},
                       budget=1, samples=500)
    assert info.value.best is not None
    assert info.value.best.evaluations == 1


def test_search_rejects_bad_input():
    with pytest.raises(ValueError):
        search_example(0.6, 0.6)
    with pytest.raises(ValueError):
        search_example(0.3, 0.5, grid={"colour": 1})
