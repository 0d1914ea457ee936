import math

import numpy as np
import pytest
from scipy import integrate

from logcap.capacity import obstacle_capacity
from logcap.elliptic import (CoefficientField, DiscreteGreenTable, EllipticityError, MeshError,
                             assemble, build_mesh, checkerboard_field, field_from_json,
                             identity_field, rotated_diag_field, validate_ellipticity)
from logcap.geometry import Arc, CompactSetSpec, RadialSegment


def radial_field():
    """Isotropic k(t) = 1 + sin(t) / 2; its h is the integral of 1/k."""
    def ev(t, th):
        k = 1 + 0.5 * np.sin(t)
        out = np.zeros(np.shape(t) + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = k
        return out
    return CoefficientField(ev, 2.0, "radial", {"kind": "radial"})


def h_radial(t):
    return integrate.quad(lambda s: 1 / (1 + 0.5 * math.sin(s)), 0, t)[0]


def test_h_solves_the_radial_ode():
    mesh = build_mesh(None, 8.0, n_theta=128)
    tab = DiscreteGreenTable(radial_field(), mesh)
    for t in (0.5, 1.0, 2.0, 4.0):
        got = float(tab.h(np.array([t]), np.array([1.0]))[0])
        assert got == pytest.approx(h_radial(t), rel=5e-3)


def test_circle_capacity_for_a_radial_field():
    K = CompactSetSpec((Arc(2.0, 0.0, 2 * math.pi),))
    cap = obstacle_capacity(K, radial_field(), n_theta=64).capacity
    assert cap == pytest.approx(h_radial(2.0), rel=2e-3)


def test_h_is_exact_for_the_laplacian():
    # t is piecewise linear on the mesh, so the discrete h reproduces it
    mesh = build_mesh(None, 6.0, n_theta=32)
    tab = DiscreteGreenTable(identity_field(), mesh)
    assert np.allclose(tab.h_nodes, mesh.vertex_t, atol=1e-9)


def test_form_annihilates_t_at_interior_nodes():
    mesh = build_mesh(None, 5.0, n_theta=32)
    A = assemble(identity_field(), mesh).matrix
    r = A @ mesh.vertex_t
    interior = np.ones(mesh.n_nodes, dtype=bool)
    interior[mesh.outer] = interior[mesh.inner] = False
    assert np.abs(r[interior]).max() < 1e-10


def test_mesh_quality_and_levels():
    K = CompactSetSpec((RadialSegment(1.0, 2.5, 0.3), Arc(3.0, 0.0, 1.0)))
    mesh = build_mesh(K, 8.0, n_theta=64)
    assert mesh.min_angle() >= 18.0
    for lvl in (1.0, 2.5, 3.0):
        assert np.min(np.abs(mesh.t_grid - lvl)) < 1e-12
    with pytest.raises(MeshError):
        build_mesh(K, 2.0)
    micro = CompactSetSpec((RadialSegment(1.0, 3.0, 0.0, log_length=-30.0),))
    with pytest.raises(MeshError):
        build_mesh(micro, 6.0)


def test_ellipticity_checks():
    ok, lam = validate_ellipticity(rotated_diag_field(2.0, 0.5))
    assert ok and lam == pytest.approx(2.0, rel=1e-6)
    ok, _ = validate_ellipticity(checkerboard_field(1.0, 3.0))
    assert ok

    def skew(t, th):
        out = np.zeros(np.shape(t) + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = 1.0
        out[..., 0, 1] = 0.5
        return out

    with pytest.raises(EllipticityError):
        validate_ellipticity(CoefficientField(skew, 1.0, "skew"))
    with pytest.raises(EllipticityError):
        field_from_json({"kind": "nonsense"})
    assert field_from_json({"kind": "rotated_diag", "d": 2.0, "angle": 0.5}).lam == 2.0
