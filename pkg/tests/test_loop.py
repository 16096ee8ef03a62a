import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holodisc import fields, kahler, loop as L, scenario, solver
from holodisc.errors import ClosureError, CornerNormalizationError, SamplingError
from holodisc.mesh import build_mesh

from conftest import lune_lagrangians, lune_map, scenario_data


def half_turns(m, k=1):
    return L.GrassmannianLoop.from_function(lambda th: np.exp(0.5j * k * th) * np.eye(m), 64)


def polygon_scenario(n):
    """Regular convex n-gon in C: y and x_k at the vertices, L_k along the edges."""
    P = [np.exp(2j * np.pi * k / n) for k in range(n)]
    lags = []
    for k in range(1, n + 1):
        a, b = P[k - 1], P[k % n]
        lags.append({"kind": "linear_plane", "phases": [float(np.angle(b - a))],
                     "offset": [[a.real, a.imag]]})
    return scenario.from_dict({
        "model": {"kind": "flat", "m": 1}, "lagrangians": lags,
        "intersections": {"x": [[[p.real, p.imag]] for p in P[1:]], "y": [[P[0].real, P[0].imag]]},
        "initializer": {"kind": "geodesic"}, "mesh": {"n": n, "h": 0.25},
    })


def lune_field(h=0.1):
    model, lags = lune_lagrangians()
    mesh = build_mesh(2, h)
    u = fields.from_function(mesh, model, lambda z: np.column_stack([np.ones_like(z), lune_map(z)]),
                             chart=np.eye(2, dtype=complex))
    return u, lags


def test_short_path_endpoints():
    R = L.LagrangianPlane.real(2)
    assert L.canonical_short_path(R, 0) == R
    assert L.canonical_short_path(R, 1) == L.LagrangianPlane.imaginary(2)
    mid = L.canonical_short_path(L.LagrangianPlane.real(1), 0.5)
    assert mid == L.LagrangianPlane(np.array([[np.exp(-0.25j * np.pi)]]))
    assert mid.det2() == pytest.approx(np.exp(-0.5j * np.pi), abs=1e-15)
    with pytest.raises(CornerNormalizationError):
        L.canonical_short_path(L.LagrangianPlane.imaginary(1), 0.3)


def test_plane_cosets_ignore_orthogonal_gauge(rng):
    Q = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))[0]
    O = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    assert L.LagrangianPlane(Q) == L.LagrangianPlane(Q @ O)
    assert L.LagrangianPlane(Q) != L.LagrangianPlane(Q * 1j ** 0.3)


def test_constant_loop_has_index_zero():
    loop = L.GrassmannianLoop.from_function(lambda th: np.eye(2), 32)
    assert L.maslov_index(loop) == 0


def test_half_turn_loops():
    assert L.maslov_index(half_turns(1)) == 1
    assert L.maslov_index(half_turns(2)) == 2
    assert L.maslov_index(half_turns(3, -2)) == -6


def test_reversal_negates(rng):
    loop = L.GrassmannianLoop.from_function(lambda th: np.diag([np.exp(0.5j * th), np.exp(-1.5j * th)]), 80)
    assert L.maslov_index(loop) == -2
    assert L.maslov_index(loop.reversed()) == 2


def test_undersampled_loop_is_resampled():
    loop = L.GrassmannianLoop.from_function(lambda th: np.exp(2.5j * th) * np.eye(1), 8)
    with pytest.raises(SamplingError):
        loop.check_sampling()
    assert L.maslov_index(loop) == 5


def test_open_path_is_not_a_loop():
    ang = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    loop = L.GrassmannianLoop(ang, np.exp(0.25j * ang)[:, None, None])
    with pytest.raises((ClosureError, SamplingError)):
        L.maslov_index(loop)


@settings(max_examples=40, deadline=None)
@given(k1=st.lists(st.integers(-3, 3), min_size=1, max_size=3), k2=st.integers(-3, 3), seed=st.integers(0, 10**6))
def test_concatenation_adds(k1, k2, seed):
    m = len(k1)
    rng = np.random.default_rng(seed)
    k2 = (np.array(k1) * 0 + k2 + rng.integers(-2, 3, size=m)).tolist()
    base = np.linalg.qr(rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m)))[0]
    a = L.GrassmannianLoop.from_function(lambda th: base @ np.diag(np.exp(0.5j * np.array(k1) * th)), 96)
    b = L.GrassmannianLoop.from_function(lambda th: base @ np.diag(np.exp(0.5j * np.array(k2) * th)), 96)
    assert L.maslov_index(L.concatenate(a, b)) == sum(k1) + sum(k2)


@settings(max_examples=40, deadline=None)
@given(kappas=st.lists(st.integers(-3, 3), min_size=1, max_size=3), seed=st.integers(0, 10**6))
def test_orthogonal_gauge_and_sampling_invariance(kappas, seed):
    m = len(kappas)
    rng = np.random.default_rng(seed)
    U = np.linalg.qr(rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m)))[0]
    f = lambda th: U @ np.diag(np.exp(0.5j * np.array(kappas) * th)) @ U.T.conj() @ U
    loop = L.GrassmannianLoop.from_function(f, 128)
    gen = rng.normal(size=(m, m))
    gen = gen - gen.T
    from scipy.linalg import expm
    O = np.array([expm(gen * np.sin(t) * 3) for t in loop.angles])
    if rng.random() < 0.5 and m > 0:
        O[:, :, 0] *= -1          # a reflection is allowed too
    mu = L.maslov_index(loop)
    assert mu == sum(kappas)
    assert L.maslov_index(loop.with_gauge(O)) == mu
    assert L.maslov_index(loop.resample(2)) == mu


def test_flat_real_arc_has_identity_planes():
    model = kahler.flat(2)
    R = kahler.linear_plane(model)
    iR = kahler.linear_plane(model, [np.pi / 2, np.pi / 2])
    mesh = build_mesh(2, 0.3)
    u = fields.MapField(mesh, model, np.zeros((mesh.num_nodes, 2)))
    paths = L.boundary_frames(u, [R, iR], 16)
    assert all(L.LagrangianPlane(q) == L.LagrangianPlane.real(2) for q in paths[0].Q)
    assert all(L.LagrangianPlane(q) == L.LagrangianPlane(np.eye(2) * 1j) for q in paths[1].Q)
    loop = L.assemble_loop(u, [R, iR], 16)
    assert loop.closed
    kinds = set(loop.kinds)
    assert kinds == {"arc 1", "arc 2", "short-path y", "short-path x1"}
    # one clockwise and one counterclockwise quarter turn per direction cancel
    assert L.maslov_index(loop) == 0


def test_lune_arc_plane_paths():
    u, lags = lune_field()
    arc1, arc2 = L.boundary_frames(u, lags, 128)
    # along R the chart tangent is real: the plane does not turn
    ph1 = np.unwrap(2 * np.angle(arc1.Q[:, 0, 0]))
    assert np.ptp(ph1) < 1e-10
    # along the unit half circle from 1 to -1 the tangent i e^{i phi} turns by pi
    ph2 = np.unwrap(2 * np.angle(arc2.Q[:, 0, 0]))
    assert abs(ph2[-1] - ph2[0]) == pytest.approx(2 * np.pi, abs=1e-6)


def test_lune_has_index_one():
    u, lags = lune_field()
    loop = L.assemble_loop(u, lags)
    assert loop.closed
    assert L.maslov_index(loop) == 1
    assert L.maslov_index(loop.reversed()) == -1
    assert L.maslov_index(loop.resample(2)) == 1


@pytest.mark.parametrize("n", [3, 4, 5])
def test_convex_polygons(n):
    sc = polygon_scenario(n)
    u, _ = solver.minimize(sc)
    assert L.maslov_index(L.assemble_loop(u, list(sc.lagrangians), 64)) == 3 - n


def test_loop_csv(tmp_path):
    u, lags = lune_field(0.3)
    loop = L.assemble_loop(u, lags, 32)
    path = loop.to_csv(tmp_path / "loop.csv")
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[0] == "theta" and lines[0].split(",")[-1] == "segment_kind"
    assert len(lines) == len(loop) + 1


def test_index_survives_constrained_perturbation(rng):
    u, lags = lune_field(0.1)
    mu = L.maslov_index(L.assemble_loop(u, lags))
    mesh = u.mesh
    for _ in range(5):
        coords = u.coords.copy()
        bump = np.maximum(1 - np.abs(mesh.complex_nodes) ** 2, 0)[:, None]
        coords += 1e-3 * bump * (rng.normal(size=coords.shape) + 1j * rng.normal(size=coords.shape))
        # slide boundary nodes along their Lagrangian
        for k in (1, 2):
            idx = mesh.arc_nodes(k)[1:-1]
            pts = fields.chart_to_points(u.chart, coords[idx])
            frames = [kahler.lagrangian_tangent_frame(lags[k - 1], kahler.lagrangian_project(lags[k - 1], p), False)[0]
                      for p in pts]
            moved = [kahler.lagrangian_project(lags[k - 1], kahler.retract(u.model, kahler.lagrangian_project(lags[k - 1], p),
                                                                            1e-3 * rng.normal() * f))
                     for p, f in zip(pts, frames)]
            coords[idx] = fields.points_to_chart(u.chart, np.array(moved))
        v = u.with_coords(coords)
        assert solver.constraint_violation(v, lags) < 1e-8
        assert L.maslov_index(L.assemble_loop(v, lags)) == mu
