"""Initial maps and projected descent for the discrete Dirichlet energy.

Unknowns are the chart coordinates of the nodes. Interior nodes move freely,
boundary nodes move along the tangent space of their arc's Lagrangian and are
projected back onto it, and marked nodes never move. Steps are preconditioned
with the stiffness matrix of the chart metric frozen at the current iterate
(a Sobolev gradient), which keeps the step count nearly independent of the
mesh size, and accepted by Armijo backtracking from unit step length.

By default successive directions are combined Fletcher-Reeves style. With two
marked points the disc automorphisms fixing them leave the continuum energy
invariant, so the discrete energy is almost flat along reparametrizations and
plain gradient steps crawl along that direction. ``method="gd"`` in the
optimizer settings gives plain projected descent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu, spsolve

from . import kahler
from .energy import EnergyReport, dirichlet_energy, energy_report, euclidean_gradient
from .errors import DomainError, InitializerError, ProjectionError
from .fields import (MapField, chart_differential, chart_metric, chart_to_points, choose_chart,
                     points_to_chart, read_points_csv)
from .mesh import INTERIOR, MARKED, DiscMesh, build_mesh
from .scenario import Scenario

INITIAL_TOL = 1e-6


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    energy: float
    grad_norm: float
    max_constraint_violation: float


def write_trace_csv(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "energy", "grad_norm", "max_constraint_violation"])
        for r in rows:
            w.writerow([r.iteration, repr(r.energy), repr(r.grad_norm), repr(r.max_constraint_violation)])
    return path


def constraint_violation(u: MapField, lagrangians) -> float:
    """Largest distance of a boundary node from its Lagrangian (both Lagrangians at corners)."""
    mesh = u.mesh
    pts = u.points()
    n = mesh.n
    worst = 0.0
    for i in mesh.boundary_nodes:
        lab = mesh.arc_label[i]
        if lab == MARKED:
            k = int(np.flatnonzero(mesh.marked == i)[0])
            labels = [k if k > 0 else n, k + 1]
        else:
            labels = [lab]
        for a in labels:
            worst = max(worst, kahler.distance_to(lagrangians[a - 1], pts[i]))
    return worst


def stiffness_matrix(mesh: DiscMesh) -> sparse.csr_matrix:
    """P1 stiffness matrix sum_T area grad(phi_a) . grad(phi_b)."""
    grads = mesh.basis_gradients()
    local = mesh.signed_areas()[:, None, None] * np.einsum("tad,tbd->tab", grads, grads)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    V = mesh.num_nodes
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(V, V))


def harmonic_extension(mesh: DiscMesh, boundary_values) -> np.ndarray:
    """Discrete harmonic map with the given values on the boundary nodes, shape (V, m)."""
    vals = np.asarray(boundary_values, dtype=complex)
    K = stiffness_matrix(mesh).tocsr()
    V = mesh.num_nodes
    bnd = np.zeros(V, bool)
    bnd[mesh.boundary_nodes] = True
    inner = np.flatnonzero(~bnd)
    out = np.array(vals, dtype=complex)
    if len(inner):
        A = K[inner][:, inner].tocsc()
        rhs = -K[inner][:, np.flatnonzero(bnd)] @ vals[bnd]
        lu = splu(A, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        out[inner] = lu.solve(np.ascontiguousarray(rhs.real)) + 1j * lu.solve(np.ascontiguousarray(rhs.imag))
    return out


# ---------------------------------------------------------------------------
# initializers


def geodesic_path(L: kahler.LagrangianChart, a, b, t) -> np.ndarray:
    """Points at fractions ``t`` of the geodesic in L from a to b (the shorter one in RP^m)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if L.kind is kahler.ChartKind.LINEAR_PLANE:
        return np.outer(1 - t, a) + np.outer(t, b)
    xa = kahler._real_representative(L, a)[0]
    xb = kahler._real_representative(L, b)[0]
    if xa @ xb < 0:
        xb = -xb
    angle = np.arccos(np.clip(xa @ xb, -1.0, 1.0))
    if angle < 1e-14:
        x = np.repeat(xa[None, :], len(t), axis=0)
    else:
        x = (np.outer(np.sin((1 - t) * angle), xa) + np.outer(np.sin(t * angle), xb)) / np.sin(angle)
    pts = x @ L.matrix.T
    return np.array([kahler.canonical_gauge(p) for p in pts])


def _path_length(model, L, a, b):
    if L.kind is kahler.ChartKind.LINEAR_PLANE:
        return float(np.linalg.norm(b - a))
    return kahler.distance(model, a, b)


def _waypoint_trace(model, L, waypoints, s):
    """Piecewise-geodesic path through ``waypoints`` in L, at length fractions ``s``."""
    lens = np.array([_path_length(model, L, a, b) for a, b in zip(waypoints[:-1], waypoints[1:])])
    if lens.sum() == 0:
        return np.repeat(np.asarray(waypoints[0])[None, :], len(s), axis=0)
    cum = np.r_[0.0, np.cumsum(lens)] / lens.sum()
    out = np.empty((len(s), len(waypoints[0])), complex)
    for j, sj in enumerate(s):
        seg = min(int(np.searchsorted(cum, sj, side="right")) - 1, len(lens) - 1)
        tj = 0.0 if lens[seg] == 0 else (sj - cum[seg]) / (cum[seg + 1] - cum[seg])
        out[j] = geodesic_path(L, waypoints[seg], waypoints[seg + 1], [tj])[0]
    return out


def _boundary_trace(sc: Scenario, mesh: DiscMesh, waypoints_per_arc) -> np.ndarray:
    model = sc.model
    corners = sc.corner_points()
    n = mesh.n
    vals = np.zeros((mesh.num_nodes, model.ambient_dim), complex)
    for k in range(1, n + 1):
        L = sc.lagrangians[k - 1]
        idx = mesh.arc_nodes(k)
        ang = np.unwrap(np.angle(mesh.complex_nodes[idx]))
        s = (ang - ang[0]) / (ang[-1] - ang[0])
        inner = []
        for w in waypoints_per_arc[k - 1] or []:
            try:
                inner.append(kahler.lagrangian_project(L, w))
            except ProjectionError as exc:
                raise InitializerError(f"waypoint on arc {k} is too far from L_{k}: {exc}") from exc
        wps = [corners[k - 1]] + inner + [corners[k % n]]
        vals[idx] = _waypoint_trace(model, L, wps, s)
    for k, node in enumerate(mesh.marked):
        vals[node] = corners[k]
    return vals


def _perturb(sc, mesh, pts, params, seed):
    eps = float(params.get("perturb", 0.0))
    if eps == 0.0:
        return pts
    rng = np.random.default_rng(params.get("seed", seed))
    d = rng.normal(size=pts.shape[1]) + 1j * rng.normal(size=pts.shape[1])
    d /= np.linalg.norm(d)
    bump = np.maximum(1.0 - np.abs(mesh.complex_nodes) ** 2, 0.0)
    bump[mesh.boundary_nodes] = 0.0
    out = pts + eps * bump[:, None] * d[None, :]
    if sc.model.is_projective:
        out /= np.linalg.norm(out, axis=1)[:, None]
    return out


def _field_from_points(sc: Scenario, mesh: DiscMesh, pts, boundary_only=False) -> MapField:
    """Map field with the given ambient node values; interior is replaced by the
    harmonic extension in the chart when ``boundary_only``."""
    model = sc.model
    corners = np.array(sc.corner_points())
    pinned = (np.array(mesh.marked), corners)
    if model.is_projective:
        chart = choose_chart(pts[mesh.boundary_nodes] if boundary_only else pts)
        bnd = np.zeros(mesh.num_nodes, bool)
        bnd[mesh.boundary_nodes] = True
        z = np.zeros((mesh.num_nodes, model.m), complex)
        src = np.flatnonzero(bnd) if boundary_only else np.arange(mesh.num_nodes)
        try:
            z[src] = points_to_chart(chart, pts[src])
        except DomainError as exc:
            raise InitializerError(f"initial map does not fit in one affine chart: {exc}") from exc
    else:
        chart = None
        z = np.array(pts, dtype=complex)
    if boundary_only:
        z = harmonic_extension(mesh, z)
    return MapField(mesh, model, z, chart, pinned)


def initialize(sc: Scenario, mesh: DiscMesh, seed: int = 0) -> MapField:
    """Initial admissible map from the scenario's initializer recipe.

    Kinds: ``constant`` (all corners coincide), ``geodesic``/``lune`` (each arc
    follows a geodesic of its Lagrangian, optionally through ``via[k-1]``),
    ``harmonic`` (piecewise geodesic through ``waypoints[k-1]``), and
    ``nodal`` (values from the CSV at ``path``). The first three extend the
    boundary trace harmonically in the chart. ``perturb`` adds
    eps (1 - |zeta|^2) d for a random direction d, which leaves the boundary
    untouched.
    """
    kind = sc.initializer.get("kind", "geodesic")
    params = sc.initializer.get("params", {}) or {}
    model = sc.model
    n = mesh.n
    if mesh.n != sc.n:
        raise InitializerError(f"mesh has {mesh.n} marked points, scenario has {sc.n} Lagrangians")

    def points_list(key):
        raw = params.get(key)
        if raw is None:
            return [None] * n
        if len(raw) != n:
            raise InitializerError(f"initializer '{key}' needs one entry per arc ({n})")
        from .scenario import parse_point
        out = []
        for entry in raw:
            if entry is None:
                out.append(None)
            elif key == "via":
                out.append([parse_point(entry, model)])
            else:
                out.append([parse_point(p, model) for p in entry])
        return out

    if kind == "constant":
        y = sc.y
        for p in sc.corner_points():
            if not kahler.points_equal(model, p, y, 1e-12):
                raise InitializerError("constant initializer needs every corner point equal to y")
        pts = np.repeat(y[None, :], mesh.num_nodes, axis=0)
        u = _field_from_points(sc, mesh, pts)
    elif kind in ("geodesic", "lune", "harmonic"):
        wps = points_list("waypoints" if kind == "harmonic" else "via")
        trace = _boundary_trace(sc, mesh, wps)
        u = _field_from_points(sc, mesh, trace, boundary_only=True)
    elif kind == "nodal":
        path = Path(params["path"])
        if sc.base_dir is not None and not path.is_absolute():
            path = sc.base_dir / path
        pts = read_points_csv(path)
        if pts.shape != (mesh.num_nodes, model.ambient_dim):
            raise InitializerError(f"{path} holds {pts.shape[0]} nodes, the mesh has {mesh.num_nodes}")
        pts = _admissible(sc, mesh, pts)
        u = _field_from_points(sc, mesh, pts)
    else:
        raise InitializerError(f"unknown initializer kind {kind!r}")

    if params.get("perturb"):
        pts = _perturb(sc, mesh, u.points(), params, seed)
        u = _field_from_points(sc, mesh, pts)
    return u


def _admissible(sc, mesh, pts):
    """Snap nodal values onto their constraints, refusing anything off by more than 1e-6."""
    pts = np.array(pts, dtype=complex)
    corners = sc.corner_points()
    for k, node in enumerate(mesh.marked):
        if kahler.distance(sc.model, pts[node], corners[k]) > INITIAL_TOL:
            name = "y" if k == 0 else f"x_{k}"
            raise InitializerError(f"node {node} should carry {name}")
        pts[node] = corners[k]
    for i in mesh.boundary_nodes:
        lab = mesh.arc_label[i]
        if lab == MARKED:
            continue
        L = sc.lagrangians[lab - 1]
        if kahler.distance_to(L, pts[i]) > INITIAL_TOL:
            raise InitializerError(f"boundary node {i} is not on L_{lab}")
        pts[i] = kahler.lagrangian_project(L, pts[i])
    return pts


# ---------------------------------------------------------------------------
# descent


class _Problem:
    """Constraint structure and metric assembly for one mesh and scenario."""

    def __init__(self, u: MapField, lagrangians):
        mesh = u.mesh
        self.mesh = mesh
        self.model = u.model
        self.lagrangians = lagrangians
        self.m = u.model.m
        labels = mesh.arc_label
        self.free = np.flatnonzero(labels == INTERIOR)
        self.sliding = np.flatnonzero(labels > 0)
        self.fixed = np.array(mesh.marked)
        grads = mesh.basis_gradients()
        self.local = mesh.signed_areas()[:, None, None] * np.einsum("tad,tbd->tab", grads, grads)
        tri = mesh.triangles
        w = 2 * self.m
        r = np.arange(w)
        self.rows = (tri[:, :, None, None, None] * w + r[None, None, None, :, None])
        self.cols = (tri[:, None, :, None, None] * w + r[None, None, None, None, :])
        shape = (len(tri), 3, 3, w, w)
        self.rows = np.broadcast_to(self.rows, shape).ravel()
        self.cols = np.broadcast_to(self.cols, shape).ravel()
        self.size = mesh.num_nodes * w

    def metric(self, u: MapField) -> sparse.csr_matrix:
        """Stiffness of the chart metric frozen at triangle centroids, in real coordinates."""
        zc = u.coords[self.mesh.triangles].mean(axis=1)
        h = chart_metric(self.model, zc)
        R = np.block([[h.real, -h.imag], [h.imag, h.real]])
        vals = self.local[:, :, :, None, None] * R[:, None, None, :, :]
        return sparse.csr_matrix((vals.ravel(), (self.rows, self.cols)), shape=(self.size, self.size))

    def tangent_basis(self, u: MapField, i: int) -> np.ndarray:
        """Chart images (rows) of a Lagrangian frame at boundary node i."""
        L = self.lagrangians[self.mesh.arc_label[i] - 1]
        if not self.model.is_projective:
            return kahler.lagrangian_tangent_frame(L, u.coords[i], check=False)
        p = chart_to_points(u.chart, u.coords[i:i + 1])[0]
        frame = kahler.lagrangian_tangent_frame(L, p, check=False)
        return chart_differential(u.chart, p, frame)

    def reduction(self, u: MapField) -> sparse.csr_matrix:
        """Columns spanning the admissible directions, in real node coordinates."""
        m, w = self.m, 2 * self.m
        rows, cols, vals = [], [], []
        col = 0
        for i in self.free:
            rows.append(i * w + np.arange(w))
            cols.append(col + np.arange(w))
            vals.append(np.ones(w))
            col += w
        for i in self.sliding:
            C = self.tangent_basis(u, i)                       # (m, m) rows
            real = np.hstack([C.real, C.imag])                 # (m, 2m)
            rows.append(np.tile(i * w + np.arange(w), m))
            cols.append(np.repeat(col + np.arange(m), w))
            vals.append(real.ravel())
            col += m
        if not rows:
            return sparse.csr_matrix((self.size, 0))
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(self.size, col))

    def step(self, u: MapField, delta_real: np.ndarray) -> MapField:
        m = self.m
        d = delta_real.reshape(-1, 2 * m)
        z = u.coords + d[:, :m] + 1j * d[:, m:]
        z[self.fixed] = u.coords[self.fixed]
        for i in self.sliding:
            L = self.lagrangians[self.mesh.arc_label[i] - 1]
            if self.model.is_projective:
                p = kahler.lagrangian_project(L, chart_to_points(u.chart, z[i:i + 1])[0])
                z[i] = points_to_chart(u.chart, p[None, :])[0]
            else:
                z[i] = kahler.lagrangian_project(L, z[i])
        return u.with_coords(z)


def _spd_solve(A, b):
    # symmetric ordering keeps the fill of the stiffness factors about half of COLAMD's
    return splu(A, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True}).solve(b)


def _real(z):
    return np.concatenate([z.real, z.imag], axis=1).ravel()


def minimize(sc: Scenario, mesh: DiscMesh | None = None, initial: MapField | None = None,
             trace: list | None = None, seed: int = 0, level: int = 0):
    """Projected descent from the scenario's initial map; returns (field, EnergyReport).

    Stops when the preconditioned gradient norm drops below tol (1 + E_0) or
    after ``max_iter`` iterations (then ``converged`` is False). Accepted
    iterates never increase the energy. If ``trace`` is a list, one TraceRow
    per iteration is appended to it.
    """
    if mesh is None:
        mesh = build_mesh(sc.mesh.n, sc.mesh.h_at(level), sc.mesh.grading)
    u = initial if initial is not None else initialize(sc, mesh, seed)
    lags = list(sc.lagrangians)
    tol_c = 1e-8 if sc.model.is_projective else 1e-10
    viol = constraint_violation(u, lags)
    if viol > max(tol_c, INITIAL_TOL):
        raise InitializerError(f"initial map violates the boundary constraints by {viol:.3g}")

    opt = sc.optimizer
    prob = _Problem(u, lags)
    energy = dirichlet_energy(u)
    threshold = opt.tol * (1.0 + energy)
    converged = False
    it = 0
    prev = None            # (full-space direction, preconditioned gradient norm^2)
    while True:
        P = prob.reduction(u)
        g = P.T @ _real(euclidean_gradient(u))
        if P.shape[1] == 0:
            gz, z = 0.0, np.zeros(0)
        else:
            z = _spd_solve((P.T @ prob.metric(u) @ P).tocsc(), g)
            gz = max(float(g @ z), 0.0)
        gnorm = float(np.sqrt(gz))
        if trace is not None:
            trace.append(TraceRow(it, energy, gnorm, viol))
        if gnorm < threshold:
            converged = True
            break
        if it >= opt.max_iter:
            break
        direction = -z
        if opt.method == "cg" and prev is not None:
            # Fletcher-Reeves; the previous direction is carried over by least squares
            PtP = (P.T @ P).tocsc()
            carried = spsolve(PtP, P.T @ prev[0])
            candidate = direction + (gz / prev[1]) * carried
            if g @ candidate < 0:
                direction = candidate
        slope = float(g @ direction)
        step = P @ direction
        alpha = 1.0
        accepted = False
        for _ in range(opt.max_backtracks):
            try:
                trial = prob.step(u, alpha * step)
            except (ProjectionError, DomainError):
                alpha *= opt.backtrack
                continue
            e_trial = dirichlet_energy(trial)
            if e_trial <= energy + opt.armijo * alpha * slope:
                accepted = True
                break
            alpha *= opt.backtrack
        if not accepted:
            if prev is None:
                break
            prev = None        # restart from the plain preconditioned gradient
            continue
        prev = (step, gz)
        u, energy = trial, e_trial
        it += 1
        viol = constraint_violation(u, lags) if trace is not None else viol
    report = energy_report(u, lags, iterations=it, converged=converged)
    return u, report
