import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wedgegreen.geometry import (WedgeDomain, make_circular_cone,
                                 make_lipschitz_cone, make_sector,
                                 make_two_slope_cone)


def test_sector_opening_range():
    with pytest.raises(ValueError):
        make_sector(0.0)
    with pytest.raises(ValueError):
        make_sector(2 * math.pi)


def test_half_plane_distance_on_bisector():
    dom = make_sector(math.pi)
    g = dom.geometry_at([0.0, 1.0], t=0.0)
    assert g.d == pytest.approx(1.0)
    assert g.r_x == pytest.approx(1.0)
    assert g.inside


def test_half_plane_graph_is_flat():
    dom = make_sector(math.pi)
    assert dom.graph_lambda() == pytest.approx(0.0, abs=1e-15)


def test_quarter_plane_graph_lambda():
    dom = make_sector(math.pi / 2)
    assert dom.graph_lambda() == pytest.approx(1.0)


def test_reflex_sector_rejects_graph_form():
    dom = make_sector(1.5 * math.pi)
    with pytest.raises(ValueError):
        dom.graph_form()
    with pytest.raises(ValueError):
        dom.to_graph_coords([1.0, 1.0])


def test_R_factor_formula():
    dom = make_sector(math.pi)
    x = [0.0, 1.0]
    assert dom.geometry_at(x, t=0.0).R_xt == pytest.approx(1.0)
    assert dom.geometry_at(x, t=1.0).R_xt == pytest.approx(0.5)


def test_quarter_plane_interior_distance():
    dom = make_sector(math.pi / 2)
    x = [math.cos(math.pi / 4), math.sin(math.pi / 4)]
    g = dom.geometry_at(x)
    assert g.d == pytest.approx(math.sin(math.pi / 4), rel=1e-12)
    assert g.r_x == pytest.approx(math.sin(math.pi / 4), rel=1e-12)


def test_outside_point_reports_signed_distance():
    dom = make_sector(math.pi / 2)
    g = dom.geometry_at([0.5, -0.5])
    assert not g.inside
    assert g.d == pytest.approx(-0.5, rel=1e-12)


def test_vertex_axis_rejected():
    dom = make_sector(math.pi / 2)
    with pytest.raises(ValueError):
        dom.geometry_at([0.0, 0.0])


def test_reflex_sector_distance_behind_both_rays():
    dom = make_sector(1.5 * math.pi)
    # polar angle 3 pi / 4: nearest boundary point is the vertex
    x = [math.cos(0.75 * math.pi), math.sin(0.75 * math.pi)]
    g = dom.geometry_at(x)
    assert g.inside
    assert g.d == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.3, 6.0), st.floats(0.05, 0.95), st.floats(0.25, 4.0))
def test_r_factor_is_scale_invariant(theta0, frac, lam):
    dom = make_sector(theta0)
    ang = frac * theta0
    x = np.array([math.cos(ang), math.sin(ang)])
    a = dom.geometry_at(x).r_x
    b = dom.geometry_at(lam * x).r_x
    assert a == pytest.approx(b, rel=1e-12)
    assert 0.0 < a <= 1.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_R_monotone_in_time_and_radius(t1, t2):
    dom = make_sector(math.pi)
    lo, hi = sorted([t1, t2])
    x = [0.3, 0.8]
    if lo < hi:
        assert dom.geometry_at(x, hi).R_xt < dom.geometry_at(x, lo).R_xt
    y = [0.6, 1.6]  # same direction, double radius
    assert dom.geometry_at(y, t1).R_xt > dom.geometry_at(x, t1).R_xt


def test_sector_and_graph_forms_agree():
    rng = np.random.default_rng(42)
    for theta0 in (0.4, math.pi / 2, 2.2, math.pi):
        dom = make_sector(theta0)
        graph = dom.graph_form()
        for _ in range(40):
            ang = rng.uniform(0.0, theta0)
            r = rng.uniform(0.1, 5.0)
            x = np.array([r * math.cos(ang), r * math.sin(ang)])
            x1, xhat, _ = dom.to_graph_coords(x)
            xg = np.array([x1, xhat[0]])
            a = dom.geometry_at(x, t=0.7)
            b = graph.geometry_at(xg, t=0.7)
            assert a.d == pytest.approx(b.d, abs=1e-12)
            assert a.r_x == pytest.approx(b.r_x, abs=1e-12)
            assert a.R_xt == pytest.approx(b.R_xt, abs=1e-12)
            assert a.inside == b.inside


def test_two_slope_cone_asymmetric():
    dom = make_two_slope_cone(1.0, 0.0)  # boundary rays at 45 deg and along -xhat
    g = dom.geometry_at([1.0, 0.0])
    assert g.inside
    assert g.d == pytest.approx(math.sin(math.pi / 4), rel=1e-12)


def test_nonhomogeneous_phi_rejected():
    with pytest.raises(ValueError):
        make_lipschitz_cone(lambda xh: float(xh[0]) ** 2, Lambda=10.0, m=2)


def test_understated_lipschitz_constant_rejected():
    with pytest.raises(ValueError):
        make_lipschitz_cone(lambda xh: 3.0 * abs(float(xh[0])), Lambda=1.0, m=2)


def test_circular_cone_axis_distance():
    # half-angle psi: distance from the axis point (h, 0, 0) is h sin(psi)
    psi = 0.6
    dom = make_circular_cone(psi, m=3)
    g = dom.geometry_at([2.0, 0.0, 0.0])
    assert g.inside
    assert g.d == pytest.approx(2.0 * math.sin(psi), rel=1e-6)


def test_wedge_with_free_directions():
    dom = make_sector(math.pi / 2, n=4)
    x = [0.5, 0.5, 7.0, -3.0]  # x'' is ignored by the cone factors
    g = dom.geometry_at(x)
    ref = make_sector(math.pi / 2).geometry_at([0.5, 0.5])
    assert g.d == pytest.approx(ref.d)
    assert g.r_x == pytest.approx(ref.r_x)


def test_kv_round_trip(tmp_path):
    for dom in (make_sector(1.23456), make_two_slope_cone(0.7, 0.2),
                make_circular_cone(0.8)):
        f = tmp_path / "dom.kv"
        dom.save(f)
        back = WedgeDomain.load(f)
        assert back.m == dom.m and back.n == dom.n
        x = np.zeros(dom.n)
        x[0] = 1.0
        x[1] = 0.4
        assert back.geometry_at(x).d == pytest.approx(dom.geometry_at(x).d, rel=1e-9)


def test_graph_coords_round_trip():
    dom = make_sector(2.0)
    x = np.array([0.3, 0.5])
    x1, xhat, xpp = dom.to_graph_coords(x)
    back = dom.from_graph_coords(x1, xhat, xpp)
    np.testing.assert_allclose(back, x, atol=1e-14)
