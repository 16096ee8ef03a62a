import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holodisc import kahler
from holodisc.errors import DomainError, NonTransverseError, ProjectionError
from holodisc.fields import chart_metric

from conftest import random_point, random_tangent

MODELS = [kahler.flat(1), kahler.flat(3), kahler.projective(1), kahler.projective(2)]


def test_flat_metric_is_euclidean():
    M = kahler.flat(1)
    assert kahler.metric_eval(M, np.zeros(1), np.ones(1), np.ones(1)) == 1.0


def test_projective_metric_at_chart_origin_and_unit_circle():
    M = kahler.projective(1)
    assert chart_metric(M, np.zeros(1))[0, 0].real == pytest.approx(4.0, abs=1e-15)
    assert chart_metric(M, np.ones(1))[0, 0].real == pytest.approx(1.0, abs=1e-15)
    # same value from homogeneous coordinates: d/dx of [1 : 1 + x] lifted horizontally
    p = kahler.from_affine_chart(np.array([1.0 + 0j]))
    v = kahler.chart_tangent(np.array([1.0 + 0j]), np.array([1.0 + 0j]))
    assert kahler.metric_eval(M, p, v, v) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind.name}{m.m}")
def test_metric_is_hermitian_and_j_squares_to_minus_one(model, rng):
    for _ in range(1000):
        p = random_point(rng, model)
        v, w = random_tangent(rng, model, p), random_tangent(rng, model, p)
        Jv, Jw = kahler.complex_structure(model, p, v), kahler.complex_structure(model, p, w)
        g = kahler.metric_eval(model, p, v, w)
        assert abs(kahler.metric_eval(model, p, Jv, Jw) - g) < 1e-10 * (1 + abs(g))
        assert np.allclose(kahler.complex_structure(model, p, Jv), -v, atol=1e-14)
        om = kahler.symplectic_form(model, p, v, w)
        assert abs(om + kahler.symplectic_form(model, p, w, v)) < 1e-10 * (1 + abs(om))
        assert kahler.metric_eval(model, p, v, v) > 0


def test_non_tangent_vector_is_rejected():
    M = kahler.projective(1)
    p = np.array([1.0, 0.0], complex)
    with pytest.raises(DomainError, match="orthogonal to p"):
        kahler.metric_eval(M, p, p, p)
    with pytest.raises(DomainError, match="orthogonal to i"):
        kahler.metric_eval(M, p, 1j * p, np.array([0, 1.0]))


def test_projective_points_are_unit_and_gauge_fixed(rng):
    M = kahler.projective(2)
    for _ in range(100):
        p = random_point(rng, M)
        assert abs(np.linalg.norm(p) - 1) < 1e-12
        first = p[np.nonzero(np.abs(p) > 1e-12)[0][0]]
        assert abs(first.imag) < 1e-14 and first.real > 0
        assert kahler.points_equal(M, p, np.exp(2.1j) * p)


def test_distance_between_coordinate_points():
    # FS distance with the unit-sphere normalization: [1:0] and [0:1] are antipodal
    M = kahler.projective(1)
    d = kahler.distance(M, np.array([1, 0j]), np.array([0, 1 + 0j]))
    assert d == pytest.approx(np.pi, abs=1e-12)
    # chart arc length along z = t, t in [0, inf): integral of 2 / (1 + t^2)
    from scipy.integrate import quad
    length, _ = quad(lambda t: 2 / (1 + t * t), 0, np.inf)
    assert d == pytest.approx(length, rel=1e-10)


def test_project_onto_real_plane_drops_imaginary_parts():
    M = kahler.flat(2)
    L = kahler.linear_plane(M)
    assert np.allclose(kahler.lagrangian_project(L, np.array([1 + 2j, 3 - 1j])), [1, 3])


def test_project_onto_real_projective_line_matches_dense_search():
    M = kahler.projective(1)
    L = kahler.real_projective(M)
    p = kahler.as_point(M, np.array([1, 0.1j]))
    q = kahler.lagrangian_project(L, p)
    assert kahler.points_equal(M, q, np.array([1, 0j]))
    t = np.linspace(0, np.pi, 200001)
    cand = np.stack([np.cos(t), np.sin(t)], axis=1).astype(complex)
    dist = [kahler.distance(M, c, p) for c in cand[::1000]]
    best = cand[::1000][int(np.argmin(dist))]
    assert kahler.distance(M, q, p) <= min(dist) + 1e-12
    assert kahler.distance(M, q, best) < 0.02


def test_projection_refuses_far_points():
    M = kahler.projective(1)
    L = kahler.real_projective(M)
    with pytest.raises(ProjectionError) as err:
        kahler.lagrangian_project(L, kahler.as_point(M, np.array([1, 1j])))
    assert err.value.margin > 0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.0, 0.5), m=st.integers(1, 3))
def test_projection_is_idempotent_and_distance_nonincreasing(seed, scale, m):
    rng = np.random.default_rng(seed)
    M = kahler.projective(m)
    U = kahler.real_axis_rotation(rng.uniform(0, np.pi), m)
    L = kahler.real_projective(M, U)
    x = rng.normal(size=m + 1)
    base = kahler.as_point(M, U @ x)
    p = kahler.as_point(M, base + scale * (rng.normal(size=m + 1) + 1j * rng.normal(size=m + 1)) / np.sqrt(m + 1))
    try:
        q = kahler.lagrangian_project(L, p)
    except ProjectionError:
        return
    assert kahler.membership(L, q, 1e-10)
    assert np.allclose(kahler.lagrangian_project(L, q), q, atol=1e-12)
    # nearest point: no farther than the real point we perturbed from
    assert kahler.distance(M, p, q) <= kahler.distance(M, p, base) + 1e-9
    assert kahler.distance_to(L, p) == pytest.approx(kahler.distance(M, p, q), abs=1e-7)


def test_flat_projection_is_nonexpansive(rng):
    M = kahler.flat(2)
    L = kahler.linear_plane(M, [0.3, 1.1], offset=np.array([1 + 1j, -2j]))
    for _ in range(200):
        a, b = random_point(rng, M), random_point(rng, M)
        pa, pb = kahler.lagrangian_project(L, a), kahler.lagrangian_project(L, b)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
        assert np.allclose(kahler.lagrangian_project(L, pa), pa, atol=1e-12)


def test_linear_frames():
    M = kahler.flat(1)
    assert np.allclose(kahler.lagrangian_tangent_frame(kahler.linear_plane(M), np.zeros(1)), [[1]])
    iR = kahler.linear_plane(M, [np.pi / 2])
    assert np.allclose(kahler.lagrangian_tangent_frame(iR, np.zeros(1)), [[1j]])


def test_real_projective_frame_is_unit_and_along_the_equator():
    M = kahler.projective(1)
    L = kahler.real_projective(M)
    p = np.array([1, 0j])
    (e,) = kahler.lagrangian_tangent_frame(L, p)
    assert kahler.metric_eval(M, p, e, e) == pytest.approx(1.0, abs=1e-12)
    # finite-difference curve through real points [cos t : sin t]
    t = 1e-6
    fd = (np.array([np.cos(t), np.sin(t)]) - np.array([np.cos(-t), np.sin(-t)])) / (2 * t)
    fd = fd / np.sqrt(kahler.metric_eval(M, p, fd.astype(complex), fd.astype(complex)))
    assert abs(abs(kahler.metric_eval(M, p, e, fd.astype(complex))) - 1) < 1e-9


@pytest.mark.parametrize("m", [1, 2, 3])
def test_frames_are_lagrangian_and_orthonormal(m, rng):
    M = kahler.projective(m)
    for _ in range(50):
        U = kahler.real_axis_rotation(rng.uniform(0, np.pi), m)
        L = kahler.real_projective(M, U)
        p = kahler.as_point(M, U @ rng.normal(size=m + 1))
        F = kahler.lagrangian_tangent_frame(L, p)
        G = np.array([[kahler.metric_eval(M, p, a, b) for b in F] for a in F])
        W = np.array([[kahler.symplectic_form(M, p, a, b) for b in F] for a in F])
        assert np.allclose(G, np.eye(m), atol=1e-10)
        assert np.abs(W).max() < 1e-10


def test_line_intersections():
    M = kahler.flat(1)
    R, iR = kahler.linear_plane(M), kahler.linear_plane(M, [np.pi / 2])
    ((p, transverse),) = kahler.transversal_intersections(R, iR)
    assert np.allclose(p, 0) and transverse
    with pytest.raises(NonTransverseError):
        kahler.transversal_intersections(R, kahler.linear_plane(M))


def test_quarter_turn_circles_meet_at_the_axis_poles():
    M = kahler.projective(1)
    L1 = kahler.real_projective(M)
    L2 = kahler.real_projective(M, kahler.real_axis_rotation(np.pi / 2))
    hits = kahler.transversal_intersections(L1, L2)
    assert len(hits) == 2 and all(t for _, t in hits)
    # on the round sphere the two great circles meet at the ends of the rotation axis,
    # which in the chart are w = 1 and w = -1
    ws = sorted((p[1] / p[0]).real for p, _ in hits)
    assert np.allclose(ws, [-1, 1], atol=1e-12)
