"""Discrete maps from the disc mesh into a Kähler model.

Maps into CP^m are stored as coordinates in one affine chart, fixed per field:
``p = chart @ (1, z) / |(1, z)|``. The chart unitary is chosen so that the
image stays well inside the chart; piecewise-linear interpolation, energies and
the optimizer all act on these chart coordinates. Flat maps use the identity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kahler
from .errors import DomainError
from .mesh import DiscMesh

CHART_MIN_OVERLAP = 1e-3


@dataclass(frozen=True, eq=False)
class MapField:
    mesh: DiscMesh
    model: kahler.KahlerModel
    coords: np.ndarray               # (V, m) complex chart coordinates
    chart: np.ndarray | None = None  # (m+1, m+1) unitary for CP^m
    pinned: tuple | None = None      # (node indices, ambient points) returned verbatim by points()

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=complex)
        if c.shape != (self.mesh.num_nodes, self.model.m):
            raise DomainError(f"coords must have shape {(self.mesh.num_nodes, self.model.m)}")
        object.__setattr__(self, "coords", c)
        if self.model.is_projective and self.chart is None:
            raise DomainError("projective map fields need a chart unitary")

    def with_coords(self, coords) -> "MapField":
        return replace(self, coords=np.asarray(coords, dtype=complex))

    def points(self) -> np.ndarray:
        """Ambient coordinates of every node (unit homogeneous vectors for CP^m).

        Pinned nodes return their stored ambient points exactly, so prescribed
        corner values survive the round trip through the chart bit for bit.
        """
        if not self.model.is_projective:
            pts = self.coords.copy()
        else:
            pts = chart_to_points(self.chart, self.coords)
        if self.pinned is not None:
            pts[self.pinned[0]] = self.pinned[1]
        return pts

    def point(self, i: int) -> np.ndarray:
        return self.points()[i]

    def to_csv(self, path) -> Path:
        path = Path(path)
        pts = self.points()
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            header = ["id"]
            for j in range(pts.shape[1]):
                header += [f"re{j}", f"im{j}"]
            w.writerow(header)
            for i, p in enumerate(pts):
                row = [i]
                for c in p:
                    row += [repr(float(c.real)), repr(float(c.imag))]
                w.writerow(row)
        return path


def chart_to_points(chart, coords):
    coords = np.atleast_2d(coords)
    w = np.hstack([np.ones((len(coords), 1), complex), coords])
    w /= np.linalg.norm(w, axis=1)[:, None]
    return w @ chart.T


def points_to_chart(chart, points):
    q = np.atleast_2d(points) @ chart.conj()
    if np.any(np.abs(q[:, 0]) < CHART_MIN_OVERLAP * np.linalg.norm(q, axis=1)):
        raise DomainError("point lies outside the affine chart of this map field")
    return q[:, 1:] / q[:, :1]


def chart_differential(chart, p, v):
    """Chart image dz of the horizontal tangent vector(s) ``v`` at the unit point ``p``."""
    q = chart.conj().T @ p
    w = np.atleast_2d(v) @ chart.conj()
    return (w[:, 1:] * q[0] - q[1:][None, :] * w[:, :1]) / q[0] ** 2


def chart_lift(chart, z, dz):
    """Horizontal tangent vector(s) at ``chart_to_points(chart, z)`` with chart image ``dz``."""
    z = np.asarray(z, dtype=complex)
    dz = np.atleast_2d(dz)
    w = np.concatenate([[1.0 + 0j], z])
    nw = np.linalg.norm(w)
    p = w / nw
    v = np.hstack([np.zeros((len(dz), 1), complex), dz]) / nw
    v = v - np.outer(v @ p.conj(), p)
    return v @ chart.T


def choose_chart(points) -> np.ndarray:
    """Unitary whose first column is the dominant direction of the point cloud.

    The dominant eigenvector of sum p p^* is phase-invariant, so the result does
    not depend on the gauge of the input points.
    """
    P = np.asarray(points, dtype=complex)
    H = P.T @ P.conj()
    vals, vecs = np.linalg.eigh(H)
    c = kahler.canonical_gauge(vecs[:, -1])
    d = len(c)
    Q, _ = np.linalg.qr(np.column_stack([c, np.eye(d, dtype=complex)]))
    Q = Q[:, :d]
    Q[:, 0] *= np.vdot(Q[:, 0], c) / abs(np.vdot(Q[:, 0], c))
    return Q


def from_points(mesh: DiscMesh, model: kahler.KahlerModel, points, chart=None) -> MapField:
    points = np.asarray(points, dtype=complex)
    if not model.is_projective:
        return MapField(mesh, model, points)
    points = points / np.linalg.norm(points, axis=1)[:, None]
    if chart is None:
        chart = choose_chart(points)
    return MapField(mesh, model, points_to_chart(chart, points), chart)


def from_function(mesh: DiscMesh, model: kahler.KahlerModel, f, chart=None) -> MapField:
    """Sample ``f(zeta)`` (vectorised over complex disc coordinates) at the nodes."""
    vals = np.asarray(f(mesh.complex_nodes), dtype=complex)
    if vals.ndim == 1:
        vals = vals[:, None]
    return from_points(mesh, model, vals, chart)


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    data = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return data[:, 0::2] + 1j * data[:, 1::2]


# ---------------------------------------------------------------------------
# chart metric


def chart_metric(model: kahler.KahlerModel, z) -> np.ndarray:
    """Hermitian matrix h(z) with g(v, w) = Re(v^* h w), batched over leading axes."""
    z = np.asarray(z, dtype=complex)
    m = model.m
    eye = np.eye(m)
    if not model.is_projective:
        return np.broadcast_to(eye, z.shape[:-1] + (m, m)).astype(complex)
    rho = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)
    outer = z[..., :, None] * z[..., None, :].conj()
    return model.fs_scale * (rho[..., None, None] * eye - outer) / rho[..., None, None] ** 2


def chart_inner(model, z, a, b):
    """g(a, b) at chart points ``z``; all arrays share leading axes, last axis m."""
    if not model.is_projective:
        return np.sum(a.conj() * b, axis=-1).real
    rho = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)
    ab = np.sum(a.conj() * b, axis=-1)
    za = np.sum(z.conj() * a, axis=-1)
    zb = np.sum(z.conj() * b, axis=-1)
    return model.fs_scale * (rho * ab - za.conj() * zb).real / rho**2
