import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from logcap.geometry import LogPolarPoint
from logcap.kernels import (LAPLACE, SingularityError, green_cartesian, green_disk, green_lp,
                            h_kernel, log_a, point_neglog_segment, regular_part,
                            self_neglog_rect, self_neglog_segment)

ts = st.floats(0.01, 25.0)
angles = st.floats(0.0, 2 * math.pi)


def cart(t, th):
    r = math.exp(-t)
    return np.array([r * math.cos(th), r * math.sin(th)])


@settings(max_examples=200, deadline=None)
@given(ts, angles, ts, angles)
def test_green_matches_cartesian_formula(t1, a1, t2, a2):
    if abs(t1 - t2) + abs(a1 - a2) < 1e-3:
        return
    ref = green_cartesian(cart(t1, a1), cart(t2, a2))
    assert green_lp(t1, a1, t2, a2) == pytest.approx(float(ref), rel=1e-8, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(ts, angles, ts, angles)
def test_green_symmetric_and_positive(t1, a1, t2, a2):
    g12 = green_lp(t1, a1, t2, a2)
    assert g12 == pytest.approx(green_lp(t2, a2, t1, a1), rel=1e-12)
    assert g12 > 0


def test_green_stays_finite_where_cartesian_underflows():
    # |x| = e^-800 underflows to 0 in floating point
    g = green_lp(800.0, 0.3, 2.0, 1.0)
    assert math.isfinite(g)
    # far from the pole G(x, y) tends to h(y) = t_y
    assert g == pytest.approx(2.0, abs=1e-12)


def test_log_a_small_and_large_branches_agree():
    s = np.array([1.0 - 1e-12, 1.0 + 1e-12])
    v = log_a(s, np.array([0.7, 0.7]))
    assert v[0] == pytest.approx(v[1], abs=1e-10)
    # near the diagonal log A ~ log(s^2 + phi^2)
    assert log_a(1e-6, 1e-6) == pytest.approx(math.log(2e-12), abs=1e-5)


def test_regular_part_has_a_finite_diagonal():
    r0 = regular_part(2.0, 1.0, 2.0, 1.0)
    r1 = regular_part(2.0, 1.0, 2.0 + 1e-7, 1.0)
    assert math.isfinite(r0) and r0 == pytest.approx(r1, abs=1e-6)


def test_green_disk_rejects_coincident_points():
    p = LogPolarPoint(1.0, 0.5)
    with pytest.raises(SingularityError):
        green_disk(p, p)
    with pytest.raises(SingularityError):
        h_kernel(p, p)


def test_h_kernel_divides_by_both_h_values():
    x, y = LogPolarPoint(1.0, 0.0), LogPolarPoint(3.0, 2.0)
    assert h_kernel(x, y) == pytest.approx(green_disk(x, y) / 3.0)
    assert LAPLACE.h(2.5) == 2.5


def test_self_segment_term_matches_double_integral():
    L = 0.3
    val, _ = integrate.dblquad(lambda u, v: -math.log(abs(u - v)) if u != v else 0.0,
                               0, L, 0, L, epsabs=1e-10)
    assert self_neglog_segment(L) == pytest.approx(val / L ** 2, rel=1e-6)


def test_self_rect_term_matches_monte_carlo():
    a, b = 0.2, 0.05
    rng = np.random.default_rng(1)
    p = rng.random((400_000, 4)) * [a, b, a, b]
    mc = -np.mean(np.log(np.hypot(p[:, 0] - p[:, 2], p[:, 1] - p[:, 3])))
    assert float(self_neglog_rect(a, b)) == pytest.approx(mc, rel=2e-3)


@pytest.mark.parametrize("along,across", [(0.0, 0.1), (0.4, 0.02), (1.5, 0.0), (-0.2, 0.3)])
def test_point_segment_term_matches_quadrature(along, across):
    L = 1.0
    f = lambda s: -0.5 * math.log((along - s) ** 2 + across ** 2)  # noqa: E731
    pts = [along] if -0.5 < along < 0.5 else None
    val, _ = integrate.quad(f, -0.5 * L, 0.5 * L, points=pts, limit=200)
    assert float(point_neglog_segment(along, across, L)) == pytest.approx(val / L, rel=1e-8)
