import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holodisc import energy, fields, kahler
from holodisc.fields import chart_lift
from holodisc.mesh import build_mesh

from conftest import lune_lagrangians, lune_map

FLAT = kahler.flat(1)


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(3, 0.1)


def test_constant_map_has_no_energy(mesh):
    u = fields.from_function(mesh, FLAT, lambda z: np.full_like(z, 0.3 - 2j))
    assert energy.dirichlet_energy(u) < 1e-25 and energy.area(u) < 1e-12
    assert np.abs(energy.energy_gradient(u)).max() < 1e-10
    CP = kahler.projective(1)
    v = fields.from_function(mesh, CP, lambda z: np.column_stack([np.ones_like(z), np.full_like(z, 0.5)]))
    assert energy.dirichlet_energy(v) == pytest.approx(0, abs=1e-28)
    assert np.abs(energy.energy_gradient(v)).max() < 1e-12


def test_identity_map(mesh):
    u = fields.from_function(mesh, FLAT, lambda z: z)
    assert energy.dirichlet_energy(u) == pytest.approx(np.pi, abs=2e-2)
    assert energy.area(u) == pytest.approx(np.pi, abs=2e-2)
    assert energy.conformality_defect(u) < 1e-12
    assert energy.dbar_residual(u) < 1e-12


def test_stretched_map(mesh):
    u = fields.from_function(mesh, FLAT, lambda z: 2 * z.real + 1j * z.imag)
    D, A = energy.dirichlet_energy(u), energy.area(u)
    assert D == pytest.approx(5 * np.pi / 2, abs=5e-2)
    assert A == pytest.approx(2 * np.pi, abs=4e-2)
    assert A < D
    # Hopf density (|u_s|^2 - |u_t|^2, 2<u_s,u_t>) = (3, 0) everywhere
    assert energy.conformality_defect(u) == pytest.approx(3 * np.sqrt(np.pi), rel=1e-2)


def test_conjugate_map_is_fully_antiholomorphic(mesh):
    u = fields.from_function(mesh, FLAT, np.conj)
    assert energy.dbar_residual(u) == pytest.approx(np.sqrt(np.pi), rel=1e-2)


def test_identity_is_discretely_harmonic(mesh):
    u = fields.from_function(mesh, FLAT, lambda z: z)
    g = energy.euclidean_gradient(u)
    interior = np.setdiff1d(np.arange(mesh.num_nodes), mesh.boundary_nodes)
    assert np.abs(g[interior]).max() < 1e-8


def _random_field(rng, mesh, model):
    m = model.m
    V = mesh.num_nodes
    k = rng.integers(1, 4)
    c = rng.normal(size=(k, m)) + 1j * rng.normal(size=(k, m))
    z = mesh.complex_nodes
    smooth = sum(np.outer(z**j, c[j]) * 0.6 for j in range(k))
    noise = 0.05 * (rng.normal(size=(V, m)) + 1j * rng.normal(size=(V, m)))
    coords = smooth + noise
    if not model.is_projective:
        return fields.MapField(mesh, model, coords)
    chart = np.linalg.qr(rng.normal(size=(m + 1, m + 1)) + 1j * rng.normal(size=(m + 1, m + 1)))[0]
    return fields.MapField(mesh, model, coords, chart)


def fd_relative_error(u, rng, step=1e-5):
    dz = rng.normal(size=u.coords.shape) + 1j * rng.normal(size=u.coords.shape)
    plus = energy.dirichlet_energy(u.with_coords(u.coords + step * dz))
    minus = energy.dirichlet_energy(u.with_coords(u.coords - step * dz))
    fd = (plus - minus) / (2 * step)
    grad = energy.energy_gradient(u)
    if u.model.is_projective:
        delta = np.vstack([chart_lift(u.chart, u.coords[i], dz[i]) for i in range(len(dz))])
    else:
        delta = dz
    an = energy.gradient_pairing(u, grad, delta)
    return abs(an - fd) / max(abs(fd), 1e-12)


@pytest.mark.parametrize("model", [kahler.flat(1), kahler.flat(2), kahler.projective(1), kahler.projective(2)],
                         ids=["flat1", "flat2", "cp1", "cp2"])
def test_gradient_matches_finite_differences(model, rng):
    mesh = build_mesh(3, 0.3)
    worst = max(fd_relative_error(_random_field(rng, mesh, model), rng) for _ in range(10))
    assert worst < 1e-5


def _quadrature_inequality(u):
    dens, area, w = energy.pointwise_densities(u)
    return np.all(area <= dens * (1 + 1e-12) + 1e-300)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), projective=st.booleans())
def test_area_never_exceeds_energy_pointwise(seed, projective):
    rng = np.random.default_rng(seed)
    mesh = build_mesh(2, 0.4)
    model = kahler.projective(2) if projective else kahler.flat(2)
    u = _random_field(rng, mesh, model)
    assert _quadrature_inequality(u)
    assert energy.area(u) <= energy.dirichlet_energy(u) * (1 + 1e-12)
    # the Cauchy-Riemann defect controls the energy from both sides
    assert energy.dbar_residual(u) ** 2 <= 2 * energy.dirichlet_energy(u) * (1 + 1e-12)


def test_affine_holomorphic_maps_are_conformal_exactly(rng):
    mesh = build_mesh(3, 0.05)
    for _ in range(5):
        a, b = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
        u = fields.from_function(mesh, kahler.flat(3), lambda z: np.outer(z, a) + b)
        D, A = energy.dirichlet_energy(u), energy.area(u)
        assert abs(D - A) / D < 1e-12


def test_polynomial_defect_shrinks_like_h_squared():
    f = lambda z: np.column_stack([z**2, z])
    ratios = []
    for h in (0.2, 0.1, 0.05):
        u = fields.from_function(build_mesh(3, h), kahler.flat(2), f)
        ratios.append(1 - energy.area(u) / energy.dirichlet_energy(u))
    assert ratios[0] / ratios[1] > 3.5 and ratios[1] / ratios[2] > 3.5


def test_exact_lune_is_nearly_perpendicular_and_holomorphic():
    model, lags = lune_lagrangians()
    mesh = build_mesh(2, 0.05)
    u = fields.from_function(mesh, model, lambda z: np.column_stack([np.ones_like(z), lune_map(z)]),
                             chart=np.eye(2, dtype=complex))
    assert energy.perpendicularity_defect(u, lags) < 5e-2
    assert energy.dirichlet_energy(u) == pytest.approx(np.pi, rel=2e-2)
    assert energy.area(u) == pytest.approx(np.pi, rel=2e-2)


def _sheared_half_plane(shear):
    # Cayley map onto the upper half plane, then (x, y) -> (x + shear * y, y):
    # the boundary stays on R, and the normal derivative picks up a tangential part
    def f(z):
        with np.errstate(divide="ignore", invalid="ignore"):
            w = 1j * (1 - z) / (1 + z)
        w = np.where(np.abs(z + 1) < 1e-14, 0, w)
        return w.real + shear * w.imag + 1j * w.imag
    return f


def test_perpendicularity_of_sheared_half_plane_maps():
    model = kahler.flat(1)
    lags = [kahler.linear_plane(model), kahler.linear_plane(model)]
    mesh = build_mesh(2, 0.05)
    conformal = fields.from_function(mesh, model, _sheared_half_plane(0.0))
    sheared = fields.from_function(mesh, model, _sheared_half_plane(1.0))
    # the image runs off to infinity at -1, so keep well away from that corner
    assert energy.perpendicularity_defect(conformal, lags, 0.3) < 5e-2
    # relative defect of the shear is the cosine 1 / sqrt(2)
    assert energy.perpendicularity_defect(sheared, lags, 0.3) == pytest.approx(np.sqrt(0.5), abs=3e-2)


def test_constant_map_perpendicularity_is_zero():
    model, lags = lune_lagrangians()
    mesh = build_mesh(2, 0.2)
    u = fields.from_function(mesh, model, lambda z: np.column_stack([np.ones_like(z), np.ones_like(z)]))
    assert energy.perpendicularity_defect(u, lags) == 0


def test_report_collects_everything():
    model, lags = lune_lagrangians()
    mesh = build_mesh(2, 0.2)
    u = fields.from_function(mesh, model, lambda z: np.column_stack([np.ones_like(z), lune_map(z)]),
                             chart=np.eye(2, dtype=complex))
    r = energy.energy_report(u, lags, iterations=3)
    assert r.iterations == 3 and r.converged
    assert set(r.as_dict()) == {"dirichlet", "area", "conformality_defect", "dbar_residual",
                                "perpendicularity_defect", "iterations", "converged"}
    assert all(isinstance(v, float) for k, v in r.as_dict().items() if k not in ("iterations", "converged"))
