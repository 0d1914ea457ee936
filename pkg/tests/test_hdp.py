import math

import numpy as np
import pytest

from logcap.geometry import Arc, CompactSetSpec, GeometryError, LogPolarPoint, RadialSegment
from logcap.hdp import (BoundaryData, BoundaryDataError, boundary_oscillation_check,
                        extrapolate_inverse, gap_table_csv, harmonic_measure_of_zeta,
                        solve_hdp, uniqueness_gap)

FULL = 2 * math.pi


def test_constant_data_gives_a_constant_solution():
    K = CompactSetSpec((RadialSegment(1.0, 3.0, 0.0), Arc(4.0, 1.0, 2.0)))
    sol = solve_hdp(K, BoundaryData.constant(0.7, 2), t_ceiling=16.0, n_theta=32)
    inner = np.ones(sol.mesh.n_nodes, dtype=bool)
    inner[sol.mesh.outer] = False
    assert np.allclose(sol.u[inner], 0.7, atol=1e-10)
    assert sol.at(2.0, 3.0)[0] == pytest.approx(0.7, abs=1e-10)


def test_circle_solution_is_the_exact_harmonic_interpolant():
    # v = h f on the circle t = 2, v = 0 at the ceiling T: v(t) = 2 (T - t) / (T - 2) beyond it
    K = CompactSetSpec((Arc(2.0, 0.0, FULL),))
    T = 64.0
    sol = solve_hdp(K, BoundaryData([1.0], 0.0), t_ceiling=T, n_theta=32)
    assert sol.at(4.0, 1.0)[0] == pytest.approx(2 * (T - 4) / (T - 2) / 4, rel=1e-9)
    assert sol.at(1.0, 1.0)[0] == pytest.approx(1.0, rel=1e-9)


def test_gap_for_the_disk_is_one():
    probes = [LogPolarPoint(t, 1.0) for t in (0.5, 1.0, 3.0)]
    g = uniqueness_gap(CompactSetSpec(()), probes, t_ceiling=32.0, n_theta=32)
    assert np.allclose(g["gap"], 1.0, atol=1e-9)


def test_puncture_mass_for_the_disk_and_a_circle():
    probes = [LogPolarPoint(t, 2.0) for t in (0.5, 3.0)]
    res = harmonic_measure_of_zeta(CompactSetSpec(()), probes, n_theta=16)
    assert np.allclose(res["limit"], 1.0, atol=1e-9)
    # behind a full circle the puncture is shielded
    res = harmonic_measure_of_zeta(CompactSetSpec((Arc(2.0, 0.0, FULL),)), probes, n_theta=16)
    assert res["limit"][0] == pytest.approx(0.0, abs=1e-9)
    csv = gap_table_csv(res)
    assert csv.splitlines()[0] == "t,theta,u_T16,u_T32,u_T64,limit"


def test_extrapolation_is_exact_on_its_model():
    Ts = np.array([16.0, 32.0, 64.0])
    alpha, beta = extrapolate_inverse(Ts, 0.3 + 2.0 / Ts)
    assert alpha == pytest.approx(0.3) and beta == pytest.approx(2.0)


def test_probe_checks():
    K = CompactSetSpec((RadialSegment(1.0, 3.0, 0.0),))
    with pytest.raises(GeometryError):
        uniqueness_gap(K, [LogPolarPoint(2.0, 0.0)], t_ceiling=16.0)
    with pytest.raises(GeometryError):
        harmonic_measure_of_zeta(K, [LogPolarPoint(20.0, 1.0)])


def test_boundary_data_validation():
    with pytest.raises(BoundaryDataError):
        BoundaryData.from_json({"values": ["x"]})
    bad = BoundaryData([lambda t, th: np.full(np.shape(t), np.inf)])
    with pytest.raises(BoundaryDataError):
        solve_hdp(CompactSetSpec((RadialSegment(1.0, 2.0, 0.0),)), bad, t_ceiling=8.0,
                  n_theta=16)
    d = BoundaryData.from_json({"values": [1, 2], "f_bar": 0.5})
    assert d.to_json() == {"values": [1.0, 2.0], "f_bar": 0.5, "default": 0.0}


def test_oscillation_chain_on_a_slit():
    slit = CompactSetSpec((RadialSegment(1.0, math.inf, 0.0),))
    res = boundary_oscillation_check(slit, BoundaryData([lambda t, th: 0.5 + 0.0 * t], 0.9),
                                     t_ceiling=64.0, n_theta=32)
    assert res["all_hold"]
    assert res["solution_band"][0] == pytest.approx(0.5, abs=0.02)
