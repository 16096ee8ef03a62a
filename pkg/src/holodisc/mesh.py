"""Triangulations of the closed unit disc with marked roots of unity.

Boundary node ``marked[k]`` sits exactly at ``exp(2*pi*i*k/n)``; ``marked[0]``
is the node at 1 (the point mapped to ``y``). Boundary nodes strictly inside
the arc between ``marked[k-1]`` and ``marked[k]`` carry ``arc_label == k``
(arc ``I_n`` ends back at 1). Marked nodes carry label 0, interior nodes -1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshError

INTERIOR = -1
MARKED = 0


@dataclass(frozen=True, eq=False)
class DiscMesh:
    nodes: np.ndarray            # (V, 2)
    triangles: np.ndarray        # (T, 3), positively oriented
    boundary_nodes: np.ndarray   # counterclockwise cycle starting at the node at 1
    marked: np.ndarray           # (n,), marked[0] at 1, marked[k] at exp(2 pi i k / n)
    arc_label: np.ndarray        # (V,)
    n: int
    target_h: float
    grading_exponent: float
    level: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def complex_nodes(self) -> np.ndarray:
        return self.nodes[:, 0] + 1j * self.nodes[:, 1]

    @property
    def edges(self) -> np.ndarray:
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    @property
    def h(self) -> float:
        e = self.edges
        return float(np.max(np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1)))

    @property
    def boundary_edges(self) -> np.ndarray:
        b = self.boundary_nodes
        return np.column_stack([b, np.roll(b, -1)])

    @property
    def boundary_angles(self) -> np.ndarray:
        """Angles in [0, 2*pi) of the boundary cycle, strictly increasing."""
        z = self.complex_nodes[self.boundary_nodes]
        return np.mod(np.angle(z), 2 * np.pi)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three P1 hat functions on each triangle, shape (T, 3, 2)."""
        p = self.nodes[self.triangles]
        area2 = 2.0 * self.signed_areas()
        out = np.empty((len(self.triangles), 3, 2))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            # gradient of the hat function at vertex i is rot(b - a) / (2 area)
            out[:, i, 0] = (a[:, 1] - b[:, 1]) / area2
            out[:, i, 1] = (b[:, 0] - a[:, 0]) / area2
        return out

    def lumped_mass(self) -> np.ndarray:
        area = self.signed_areas()
        mass = np.zeros(self.num_nodes)
        np.add.at(mass, self.triangles.ravel(), np.repeat(area / 3.0, 3))
        return mass

    def arc_nodes(self, k: int) -> np.ndarray:
        """Boundary nodes of arc I_k in counterclockwise order, both corners included."""
        b = self.boundary_nodes
        start = int(np.flatnonzero(b == self.marked[k - 1])[0])
        end_node = self.marked[k % self.n]
        out = [b[start]]
        i = start
        while True:
            i = (i + 1) % len(b)
            out.append(b[i])
            if b[i] == end_node:
                break
        return np.array(out)

    def euler_characteristic(self) -> int:
        return self.num_nodes - len(self.edges) + len(self.triangles)

    def validate(self):
        if np.any(self.signed_areas() <= 0):
            raise MeshError("mesh has non-positively oriented triangles")
        if self.euler_characteristic() != 1:
            raise MeshError("Euler characteristic of a disc must be 1")
        for k in range(self.n):
            z = self.complex_nodes[self.marked[k]]
            if abs(z - np.exp(2j * np.pi * k / self.n)) > 1e-14:
                raise MeshError(f"marked node {k} is not at the root of unity")
        labels = self.arc_label[self.boundary_nodes]
        if np.count_nonzero(labels == MARKED) != self.n:
            raise MeshError("every marked node must separate two arcs")
        interior = np.setdiff1d(np.arange(self.num_nodes), self.boundary_nodes)
        if np.any(self.arc_label[interior] != INTERIOR):
            raise MeshError("interior node carries an arc label")
        return self

    def to_csv(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        marked_k = np.full(self.num_nodes, -1)
        marked_k[self.marked] = np.arange(self.n)
        node_path = directory / "mesh_nodes.csv"
        tri_path = directory / "mesh_triangles.csv"
        with open(node_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id", "s", "t", "arc_label", "marked_k"])
            for i, (s, t) in enumerate(self.nodes):
                w.writerow([i, repr(float(s)), repr(float(t)), int(self.arc_label[i]), int(marked_k[i])])
        with open(tri_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["a", "b", "c"])
            w.writerows(self.triangles.tolist())
        return node_path, tri_path


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Edge-midpoint rule on triangles (exact for degree 2) and 2-point Gauss on boundary edges."""

    tri_bary: np.ndarray        # (3, 3) barycentric coordinates of the points
    tri_weights: np.ndarray     # (T, 3)
    edge_params: np.ndarray     # (2,) in [0, 1]
    edge_weights: np.ndarray    # (E_b, 2)

    @classmethod
    def for_mesh(cls, mesh: DiscMesh) -> "QuadratureRule":
        bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        area = mesh.signed_areas()
        be = mesh.boundary_edges
        length = np.linalg.norm(mesh.nodes[be[:, 1]] - mesh.nodes[be[:, 0]], axis=1)
        g = 0.5 / np.sqrt(3.0)
        return cls(bary, np.repeat(area[:, None] / 3.0, 3, axis=1),
                   np.array([0.5 - g, 0.5 + g]), np.repeat(length[:, None] / 2.0, 2, axis=1))

    def integrate(self, mesh: DiscMesh, f) -> float:
        """Integrate ``f(s, t)`` over the triangulated domain."""
        pts = np.einsum("qi,tid->tqd", self.tri_bary, mesh.nodes[mesh.triangles])
        vals = f(pts[..., 0], pts[..., 1])
        return float(np.sum(self.tri_weights * vals))


def _graded_arc(theta0, theta1, target_h, grading):
    """Interior angles of one arc, graded toward both ends."""
    L = theta1 - theta0
    half = max(1, int(np.ceil(L * grading / (2.0 * target_h))))
    tau = np.arange(1, half + 1) / half
    left = theta0 + 0.5 * L * tau**grading
    right = theta1 - 0.5 * L * tau[:-1][::-1] ** grading
    return np.concatenate([left, right])


def _hex_lattice(spacing, center, radius, phase):
    nx = int(np.ceil(radius / spacing)) + 1
    ny = int(np.ceil(radius / (spacing * np.sqrt(3) / 2))) + 1
    i, j = np.meshgrid(np.arange(-nx, nx + 1), np.arange(-ny, ny + 1), indexing="xy")
    x = (i + 0.5 * (j % 2) + phase) * spacing
    y = (j + phase) * spacing * np.sqrt(3) / 2
    pts = np.column_stack([x.ravel(), y.ravel()]) + center
    return pts[np.linalg.norm(pts - center, axis=1) <= radius]


def build_mesh(n: int, target_h: float, grading_exponent: float = 2.0) -> DiscMesh:
    """Graded Delaunay triangulation of the unit disc with ``n`` marked roots of unity."""
    if n < 2:
        raise MeshError("need at least two marked points")
    if not 0 < target_h < 1:
        raise MeshError("target_h must lie in (0, 1)")
    if grading_exponent < 1:
        raise MeshError("grading_exponent must be >= 1")
    arc_len = 2 * np.pi / n
    if target_h > 2 * np.sin(arc_len / 2):
        raise MeshError(f"target_h={target_h} too large to resolve {n} arcs")

    gamma = float(grading_exponent)
    corners = np.exp(2j * np.pi * np.arange(n) / n)
    angles, labels = [], []
    for k in range(1, n + 1):
        angles.append((k - 1) * arc_len)
        labels.append(MARKED)
        inner = _graded_arc((k - 1) * arc_len, k * arc_len, target_h, gamma)
        angles.extend(inner)
        labels.extend([k] * len(inner))
    angles = np.array(angles)
    bz = np.exp(1j * angles)
    marked_pos = np.flatnonzero(np.array(labels) == MARKED)
    # exact corner coordinates rather than exp(i*angle) rounding
    bz[marked_pos] = corners
    bz[marked_pos[0]] = 1.0
    boundary = np.column_stack([bz.real, bz.imag])
    for k in range(n):
        boundary[marked_pos[k]] = _exact_root(k, n)

    h_min = 0.5 * arc_len / max(1, int(np.ceil(arc_len * gamma / (2 * target_h)))) ** gamma

    def sizing(pts):
        if gamma == 1.0:
            return np.full(len(pts), target_h)
        zc = pts[:, 0] + 1j * pts[:, 1]
        d = np.min(np.abs(zc[:, None] - corners[None, :]), axis=1)
        return np.maximum(target_h * np.minimum(1.0, 2 * d / arc_len) ** (1 - 1 / gamma), h_min)

    accepted = [boundary]
    level = 0
    spacing = target_h
    while True:
        if level == 0:
            cand = _hex_lattice(spacing, np.zeros(2), 1.0, 0.137)
        else:
            reach = 0.5 * arc_len * (2.0 * spacing / target_h) ** (1 / (1 - 1 / gamma))
            cand = np.vstack([_hex_lattice(spacing, np.array([c.real, c.imag]), reach, 0.137)
                              for c in corners])
        hs = sizing(cand)
        keep = (np.linalg.norm(cand, axis=1) < 1 - 0.5 * hs) & (hs >= spacing)
        if level > 0:
            keep &= hs < 2 * spacing
        cand, hs = cand[keep], hs[keep]
        if len(cand):
            tree = cKDTree(np.vstack(accepted))
            dist, _ = tree.query(cand)
            ok = dist >= 0.6 * hs
            # overlapping corner patches produce duplicates; keep first occurrence
            cand, hs = cand[ok], hs[ok]
            if len(cand):
                _, first = np.unique(np.round(cand / (0.01 * spacing)), axis=0, return_index=True)
                cand = cand[np.sort(first)]
                accepted.append(cand)
        if gamma == 1.0 or spacing <= h_min:
            break
        spacing /= 2
        level += 1

    pts = np.vstack(accepted)
    nb = len(boundary)
    tri = Delaunay(pts).simplices.astype(np.int64)
    tri = _orient(pts, tri)
    tri = tri[_area(pts, tri) > 1e-14 * target_h**2]

    arc_label = np.full(len(pts), INTERIOR)
    arc_label[:nb] = labels
    mesh = DiscMesh(pts, tri, np.arange(nb), marked_pos.astype(np.int64), arc_label,
                    n, float(target_h), gamma, 0)
    return mesh.validate()


def _exact_root(k, n):
    # keep 1, i, -1, -i exact
    if (4 * k) % n == 0:
        q = (4 * k) // n
        return np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]][q % 4])
    return np.array([np.cos(2 * np.pi * k / n), np.sin(2 * np.pi * k / n)])


def _area(pts, tri):
    p = pts[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _orient(pts, tri):
    tri = tri.copy()
    neg = _area(pts, tri) < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def refine(mesh: DiscMesh) -> DiscMesh:
    """Split every triangle into four; new boundary nodes are pushed onto the circle."""
    tri = mesh.triangles
    V = mesh.num_nodes
    edges = np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.reshape(-1, 3)
    mid = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])

    on_boundary = np.zeros(V, bool)
    on_boundary[mesh.boundary_nodes] = True
    # boundary edges are those between consecutive boundary nodes
    be = np.sort(mesh.boundary_edges, axis=1)
    be_index = {tuple(e): i for i, e in enumerate(be.tolist())}
    is_bedge = np.array([tuple(e) in be_index for e in uniq.tolist()])
    mid[is_bedge] /= np.linalg.norm(mid[is_bedge], axis=1)[:, None]

    nodes = np.vstack([mesh.nodes, mid])
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, bc, ca = V + inv[:, 0], V + inv[:, 1], V + inv[:, 2]
    new_tri = np.vstack([
        np.column_stack([a, ab, ca]),
        np.column_stack([ab, b, bc]),
        np.column_stack([ca, bc, c]),
        np.column_stack([ab, bc, ca]),
    ])

    # rebuild the boundary cycle: after each old boundary node insert its edge midpoint
    uniq_index = {tuple(e): i for i, e in enumerate(uniq.tolist())}
    cycle = []
    for s, t in mesh.boundary_edges.tolist():
        cycle.append(s)
        cycle.append(V + uniq_index[tuple(sorted((s, t)))])
    cycle = np.array(cycle)

    arc_label = np.concatenate([mesh.arc_label, np.full(len(uniq), INTERIOR)])
    for s, t in mesh.boundary_edges.tolist():
        node = V + uniq_index[tuple(sorted((s, t)))]
        arc_label[node] = max(mesh.arc_label[s], mesh.arc_label[t])
    out = DiscMesh(nodes, new_tri, cycle, mesh.marked.copy(), arc_label, mesh.n,
                   mesh.target_h, mesh.grading_exponent, mesh.level + 1)
    if np.any(out.signed_areas() <= 0):
        raise MeshError("refinement produced an inverted triangle")
    return out
