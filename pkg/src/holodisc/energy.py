"""Dirichlet energy, area and the first-order certificates of a discrete disc.

All integrals use piecewise-linear interpolation of the chart coordinates and the
degree-2 edge-midpoint rule on each triangle, so for the flat model they are exact
for the interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy import sparse

from . import kahler
from .fields import MapField, chart_differential, chart_inner, points_to_chart
from .mesh import MARKED, QuadratureRule

AREA_SLACK = 1e-9
NORMAL_DERIVATIVE_FLOOR = 1e-10


@dataclass
class EnergyReport:
    dirichlet: float
    area: float
    conformality_defect: float
    dbar_residual: float
    perpendicularity_defect: float
    iterations: int = 0
    converged: bool = True

    def as_dict(self):
        return asdict(self)


class _Geometry:
    """Per-triangle P1 data shared by all functionals of one map field."""

    def __init__(self, u: MapField):
        mesh = u.mesh
        self.u = u
        self.quad = QuadratureRule.for_mesh(mesh)
        self.grads = mesh.basis_gradients()                 # (T, 3, 2)
        zt = u.coords[mesh.triangles]                       # (T, 3, m)
        self.a = np.einsum("ti,tim->tm", self.grads[..., 0], zt)   # d/ds
        self.b = np.einsum("ti,tim->tm", self.grads[..., 1], zt)   # d/dt
        self.zq = np.einsum("qi,tim->tqm", self.quad.tri_bary, zt)  # (T, 3, m)
        self.w = self.quad.tri_weights                      # (T, 3)

    def forms(self):
        """g(u_s,u_s), g(u_t,u_t), g(u_s,u_t) at every quadrature point."""
        model = self.u.model
        a = np.broadcast_to(self.a[:, None, :], self.zq.shape)
        b = np.broadcast_to(self.b[:, None, :], self.zq.shape)
        return (chart_inner(model, self.zq, a, a), chart_inner(model, self.zq, b, b),
                chart_inner(model, self.zq, a, b))


def pointwise_densities(u: MapField):
    """(dirichlet density, area density, weights) at quadrature points."""
    geo = _Geometry(u)
    gss, gtt, gst = geo.forms()
    dens = 0.5 * (gss + gtt)
    area = np.sqrt(np.maximum(gss * gtt - gst**2, 0.0))
    return dens, area, geo.w


def dirichlet_energy(u: MapField) -> float:
    geo = _Geometry(u)
    gss, gtt, _ = geo.forms()
    return float(np.sum(geo.w * 0.5 * (gss + gtt)))


def area(u: MapField) -> float:
    geo = _Geometry(u)
    gss, gtt, gst = geo.forms()
    return float(np.sum(geo.w * np.sqrt(np.maximum(gss * gtt - gst**2, 0.0))))


def conformality_defect(u: MapField, exclusion_radius=0.0) -> float:
    """L2 norm of the Hopf density (|u_s|^2 - |u_t|^2, 2 g(u_s, u_t)).

    With a positive ``exclusion_radius`` the integral skips quadrature points
    that close to a marked node. The full norm does not go to zero under
    refinement at transversal corners: there |du|^2 ~ 1/r and the P1 error of
    the Hopf density is O(1) in L2 on the corner elements whatever their size.
    """
    geo = _Geometry(u)
    gss, gtt, gst = geo.forms()
    dens = geo.w * ((gss - gtt) ** 2 + 4 * gst**2)
    if exclusion_radius > 0:
        dens = dens[_corner_distance(u.mesh, geo) >= exclusion_radius]
    return float(np.sqrt(np.sum(dens)))


def _corner_distance(mesh, geo):
    pts = np.einsum("qi,tid->tqd", geo.quad.tri_bary, mesh.nodes[mesh.triangles])
    z = pts[..., 0] + 1j * pts[..., 1]
    return np.min(np.abs(z[..., None] - mesh.complex_nodes[mesh.marked]), axis=-1)


def dbar_residual(u: MapField) -> float:
    """L2 norm of (u_s + J u_t) / 2; the chart is holomorphic so J is multiplication by i."""
    geo = _Geometry(u)
    c = 0.5 * (geo.a + 1j * geo.b)
    c = np.broadcast_to(c[:, None, :], geo.zq.shape)
    return float(np.sqrt(np.sum(geo.w * chart_inner(u.model, geo.zq, c, c))))


def euclidean_gradient(u: MapField) -> np.ndarray:
    """Gradient of the discrete energy w.r.t. nodal chart coordinates.

    Packed as ``dE/dRe + i dE/dIm`` per coordinate, shape (V, m), so that
    ``dE = sum Re(conj(grad) * dz)``.
    """
    geo = _Geometry(u)
    model = u.model
    a = geo.a[:, None, :]
    b = geo.b[:, None, :]
    z = geo.zq
    w = geo.w[..., None]
    if model.is_projective:
        s = model.fs_scale
        rho = (1.0 + np.sum(np.abs(z) ** 2, axis=-1))[..., None]
        ca = np.sum(z.conj() * a, axis=-1)[..., None]
        cb = np.sum(z.conj() * b, axis=-1)[..., None]
        S = np.sum(np.abs(a) ** 2 + np.abs(b) ** 2, axis=-1)[..., None]
        grad_a = s * (rho * a - z * ca) / rho**2
        grad_b = s * (rho * b - z * cb) / rho**2
        num = rho * S - np.abs(ca) ** 2 - np.abs(cb) ** 2
        grad_z = s * ((z * S - a * ca.conj() - b * cb.conj()) / rho**2 - 2 * z * num / rho**3)
        ga = np.sum(w * grad_a, axis=1)          # (T, m)
        gb = np.sum(w * grad_b, axis=1)
        gz = w * grad_z                          # (T, q, m)
        per_vertex = (geo.grads[..., 0][..., None] * ga[:, None, :]
                      + geo.grads[..., 1][..., None] * gb[:, None, :]
                      + np.einsum("qi,tqm->tim", geo.quad.tri_bary, gz))
    else:
        area_t = np.sum(geo.w, axis=1)[:, None]
        per_vertex = (geo.grads[..., 0][..., None] * (area_t * geo.a)[:, None, :]
                      + geo.grads[..., 1][..., None] * (area_t * geo.b)[:, None, :])
    out = np.zeros(u.coords.shape, complex)
    tri = u.mesh.triangles
    for j in range(3):
        np.add.at(out, tri[:, j], per_vertex[:, j])
    return out


def energy_gradient(u: MapField) -> np.ndarray:
    """Riemannian gradient for the lumped nodal metric, as ambient tangent vectors.

    Interior entries are the discrete tension field; boundary entries are not
    projected onto the Lagrangians. For CP^m the vectors are horizontal at the
    corresponding entries of ``u.points()``.
    """
    eg = euclidean_gradient(u)
    mass = u.mesh.lumped_mass()[:, None]
    if not u.model.is_projective:
        return eg / mass
    h = _chart_metric_nodes(u)
    r = np.linalg.solve(h, eg[..., None])[..., 0] / mass
    from .fields import chart_lift
    return np.vstack([chart_lift(u.chart, u.coords[i], r[i])[0] for i in range(len(r))])


def _chart_metric_nodes(u):
    from .fields import chart_metric
    return chart_metric(u.model, u.coords)


def gradient_pairing(u: MapField, grad, delta) -> float:
    """Lumped-metric pairing sum_i M_i g(grad_i, delta_i) of ambient tangent fields."""
    mass = u.mesh.lumped_mass()
    if not u.model.is_projective:
        return float(np.sum(mass * np.sum(grad.conj() * delta, axis=1).real))
    return float(u.model.fs_scale * np.sum(mass * np.sum(grad.conj() * delta, axis=1).real))


def perpendicularity_defect(u: MapField, lagrangians, exclusion_radius=None) -> float:
    """Max over boundary quadrature points of |g(d_nu u, e)| / |d_nu u| over frame vectors e.

    ``lagrangians[k-1]`` is the chart for arc I_k. The normal derivative is
    recovered from a least-squares quadratic fit over the two-ring patch of the
    boundary edge, since the P1 gradient of the owning triangle is only O(1)
    accurate on a graded mesh. The ratio is the cosine of the angle between
    d_nu u and the Lagrangian, so it does not grow with the corner blow-up of
    |du|. Points where d_nu u vanishes contribute zero. Points closer than
    ``exclusion_radius`` (default 2h) to a marked node are skipped.
    """
    mesh = u.mesh
    model = u.model
    if exclusion_radius is None:
        exclusion_radius = 2.0 * mesh.target_h / 2 ** mesh.level
    adjacency = _node_adjacency(mesh)
    corners = mesh.complex_nodes[mesh.marked]
    quad = QuadratureRule.for_mesh(mesh)
    worst = 0.0
    for s, e in mesh.boundary_edges.tolist():
        label = max(mesh.arc_label[s], mesh.arc_label[e])
        if label == MARKED:
            continue
        ps, pe = mesh.nodes[s], mesh.nodes[e]
        tangent = pe - ps
        normal = np.array([tangent[1], -tangent[0]]) / np.linalg.norm(tangent)
        patch = [s, e]
        for _ in range(2):
            patch = adjacency[patch].indices
        patch = np.unique(patch)
        for tq in quad.edge_params:
            xy = (1 - tq) * ps + tq * pe
            if np.min(np.abs(xy[0] + 1j * xy[1] - corners)) < exclusion_radius:
                continue
            z0, grad = _quadratic_fit(mesh.nodes[patch] - xy, u.coords[patch])
            dnu = normal[0] * grad[0] + normal[1] * grad[1]
            size = np.sqrt(chart_inner(model, z0, dnu, dnu))
            if size < NORMAL_DERIVATIVE_FLOOR:
                continue
            frame = _frame_in_chart(u, lagrangians[label - 1], z0)
            vals = chart_inner(model, np.broadcast_to(z0, frame.shape),
                               np.broadcast_to(dnu, frame.shape), frame)
            worst = max(worst, float(np.max(np.abs(vals))) / size)
    return worst


def _node_adjacency(mesh):
    tri = mesh.triangles
    rows = np.repeat(np.arange(len(tri)), 3)
    incidence = sparse.csr_matrix((np.ones(tri.size), (rows, tri.ravel())),
                                  shape=(len(tri), mesh.num_nodes))
    return (incidence.T @ incidence).tocsr()


def _quadratic_fit(offsets, values):
    """Value and (d/ds, d/dt) at the origin of the least-squares quadratic through the samples."""
    scale = np.abs(offsets).max()
    d = offsets / scale
    X = np.column_stack([np.ones(len(d)), d[:, 0], d[:, 1], d[:, 0] ** 2, d[:, 0] * d[:, 1], d[:, 1] ** 2])
    coef, *_ = np.linalg.lstsq(X, values, rcond=None)
    return coef[0], coef[1:3] / scale


def _frame_in_chart(u, L, z):
    """Lagrangian frame at the projection of chart point ``z`` onto ``L``, in chart vectors."""
    if not u.model.is_projective:
        p = kahler.lagrangian_project(L, z)
        return kahler.lagrangian_tangent_frame(L, p, check=False)
    from .fields import chart_to_points
    p = chart_to_points(u.chart, z[None, :])[0]
    p = kahler.lagrangian_project(L, p)
    frame = kahler.lagrangian_tangent_frame(L, p, check=False)
    return chart_differential(u.chart, p, frame)


def energy_report(u: MapField, lagrangians, iterations=0, converged=True) -> EnergyReport:
    return EnergyReport(
        dirichlet=dirichlet_energy(u),
        area=area(u),
        conformality_defect=conformality_defect(u),
        dbar_residual=dbar_residual(u),
        perpendicularity_defect=float(perpendicularity_defect(u, lagrangians)),
        iterations=iterations,
        converged=converged,
    )
