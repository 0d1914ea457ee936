import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logcap.geometry import CompactSetSpec, GeometryError, RadialSegment, shell_decompose
from logcap.wiener import (INCONCLUSIVE, LOG_IRREGULAR, LOG_REGULAR, ShellTerm, WienerReport,
                           builtin_family, classify, family_asymptotics, first_valid_n,
                           fit_decay, integral_test, iterated_log, series_terms,
                           sparse_interval, sparse_weight, wiener_report)


def log_length_mp(n, a, k, eps):
    """log of the t-length straight from the Cartesian endpoints, in high precision."""
    w = mpmath.mpf(n)
    for j in range(1, k):
        x = mpmath.mpf(n)
        for _ in range(j):
            x = mpmath.log(x)
        w *= x
    x = mpmath.mpf(n)
    for _ in range(k):
        x = mpmath.log(x)
    w *= x ** (1 + eps)
    top = mpmath.mpf(a) ** (n + 1)
    expo = mpmath.mpf(a) ** n * w
    with mpmath.workdps(int(60 + float(max(expo, top)) / 2.0)):
        r_lo = mpmath.exp(-top)
        r_hi = r_lo + mpmath.exp(-expo)
        t_lo = -mpmath.log(r_hi)
        return float(mpmath.log(top - t_lo))


@pytest.mark.parametrize("n,k,eps", [(2, 1, 0.0), (5, 1, 1.0), (8, 1, 0.0), (8, 2, 1.0),
                                     (7, 2, 0.0), (16, 3, 0.5)])
def test_sparse_endpoints_match_high_precision(n, k, eps):
    if not sparse_weight(n, k, eps) > 0:
        pytest.skip("iterated log not positive")
    _, _, log_len = sparse_interval(n, 2.0, k, eps)
    assert log_len == pytest.approx(log_length_mp(n, 2, k, eps), rel=1e-10, abs=1e-10)


def test_iterated_logs():
    assert iterated_log(math.e ** math.e, 2) == pytest.approx(1.0)
    assert math.isnan(iterated_log(2.0, 3))
    assert first_valid_n(1) == 2
    assert first_valid_n(2) == 3
    assert first_valid_n(3) == 16


def test_builtin_family_validation():
    with pytest.raises(GeometryError):
        builtin_family("sparse_intervals", 2.0, N=1)
    with pytest.raises(GeometryError):
        builtin_family("sparse_intervals", 2.0, k=0)
    with pytest.raises(GeometryError):
        builtin_family("deleted_radius", 1.0)
    with pytest.raises(GeometryError):
        builtin_family("spiral")
    K = builtin_family("sparse_intervals", 2.0, k=1, eps=0.0, n_max=8)
    assert len(K.primitives) == 7


def test_sparse_terms_follow_the_analytic_law():
    K = builtin_family("sparse_intervals", 2.0, k=1, eps=1.0, n_max=8)
    rep = series_terms(shell_decompose(K, 2.0, 4, 8), panels=128)
    model = family_asymptotics("sparse_intervals", 2.0, 1, 1.0)["model"]
    for s in rep.shells:
        assert s.term_h == pytest.approx(model(s.n), rel=0.02)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.1, 10.0))
def test_fit_recovers_a_power_law(p, c):
    ns = np.arange(2, 10)
    fit = fit_decay(ns, c * ns ** -p)
    assert fit["p"] == pytest.approx(p, rel=1e-9)
    assert fit["r2"] == pytest.approx(1.0)


def report(terms, start=1):
    return WienerReport(2.0, [ShellTerm(n, t * 2.0 ** n, t, t) for n, t in
                              enumerate(terms, start)])


def test_classify_needs_enough_shells():
    assert classify(report([1.0, 1.0, 1.0])).verdict == INCONCLUSIVE


def test_classify_on_synthetic_series():
    ns = np.arange(1, 9)
    assert classify(report(list(np.ones(8)))).verdict == LOG_REGULAR
    assert classify(report(list(1.0 / ns ** 2))).verdict == LOG_IRREGULAR
    assert classify(report(list(1.0 / ns))).verdict == LOG_REGULAR
    assert classify(report([0.0] * 6)).verdict == LOG_IRREGULAR
    mid = classify(report(list(1.0 / ns ** 1.1)))
    assert mid.verdict == INCONCLUSIVE and "between" in mid.confidence


def test_failed_shell_is_marked_not_raised():
    rep = WienerReport(2.0, [ShellTerm(1, math.nan, math.nan, None, "failed", "boom")])
    assert classify(rep).verdict == INCONCLUSIVE
    micro = CompactSetSpec((RadialSegment(1.0, 3.0, 0.0, log_length=-30.0),))
    rep = series_terms(shell_decompose(micro, 2.0, 1, 1), route="obstacle")
    assert rep.shells[0].status == "failed" and "micro" in rep.shells[0].error


def test_deleted_radius_verdict_and_integral_test():
    K = builtin_family("deleted_radius", 2.0, n_max=5)
    rep = wiener_report(K, 2.0, 1, 5, panels=96, rho_grid=[2.0, 4.0, 8.0])
    assert rep.verdict == LOG_REGULAR
    assert min(rep.terms_h.values()) > 1.2
    c = [row["c"] for row in rep.integral]
    assert c[0] < c[1] < c[2]
    assert rep.integral[-1]["partial_integral"] > 0
    with pytest.raises(GeometryError):
        integral_test(K, [1.0, 2.0])


@pytest.mark.parametrize("a", [1.5, 3.0])
def test_verdict_does_not_depend_on_the_shell_base(a):
    K = builtin_family("deleted_radius", a, n_max=5)
    rep = wiener_report(K, a, 1, 5, panels=96)
    assert rep.verdict == LOG_REGULAR
    v = [rep.terms_h[n] for n in range(1, 6)]
    # terms climb toward a from below
    assert all(x < y for x, y in zip(v, v[1:]))
    assert 0.85 * a < v[-1] < a
