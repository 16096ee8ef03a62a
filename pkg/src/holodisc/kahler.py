r"""Kähler ambient models (flat $\mathbb{C}^m$ and $\mathbb{CP}^m$) and their Lagrangians.

Points of $\mathbb{CP}^m$ are unit vectors in $\mathbb{C}^{m+1}$ and tangent
vectors live in the horizontal space $\{v : \langle p, v\rangle = 0\}$, so the
complex structure acts as multiplication by ``1j``. The Fubini–Study metric on
horizontal vectors is ``fs_scale * Re<v, w>``; the default ``fs_scale = 4``
reproduces the affine-chart metric $4|dz|^2/(1+|z|^2)^2$ when $m = 1$ (round
sphere of radius one).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonTransverseError, ProjectionError

TANGENT_TOL = 1e-8
MEMBERSHIP_TOL = 1e-8
# FS distance beyond which projection onto a RealProjective chart refuses to act
PROJECTION_RADIUS = np.pi / 4


class ModelKind(enum.Enum):
    FLAT = "flat"
    PROJECTIVE = "projective"


class ChartKind(enum.Enum):
    LINEAR_PLANE = "linear"
    REAL_PROJECTIVE = "real_projective"


@dataclass(frozen=True)
class KahlerModel:
    kind: ModelKind
    complex_dimension: int
    fs_scale: float = 4.0

    def __post_init__(self):
        if self.complex_dimension < 1:
            raise DomainError("complex_dimension must be a positive integer")
        if self.fs_scale <= 0:
            raise DomainError("fs_scale must be positive")

    @property
    def m(self) -> int:
        return self.complex_dimension

    @property
    def ambient_dim(self) -> int:
        """Length of the coordinate vector representing a point."""
        return self.m + 1 if self.kind is ModelKind.PROJECTIVE else self.m

    @property
    def is_projective(self) -> bool:
        return self.kind is ModelKind.PROJECTIVE


def flat(m: int) -> KahlerModel:
    return KahlerModel(ModelKind.FLAT, m)


def projective(m: int, fs_scale: float = 4.0) -> KahlerModel:
    return KahlerModel(ModelKind.PROJECTIVE, m, fs_scale)


# ---------------------------------------------------------------------------
# points


def canonical_gauge(p):
    """Rescale a homogeneous vector to unit norm with first nonzero entry real positive."""
    p = np.asarray(p, dtype=complex)
    p = p / np.linalg.norm(p)
    idx = np.flatnonzero(np.abs(p) > 1e-12)[0]
    return p * (np.abs(p[idx]) / p[idx])


def as_point(model: KahlerModel, p):
    p = np.asarray(p, dtype=complex).reshape(-1)
    if p.shape[0] != model.ambient_dim:
        raise DomainError(f"point has {p.shape[0]} coordinates, model expects {model.ambient_dim}")
    if model.is_projective:
        if not np.all(np.isfinite(p)) or np.linalg.norm(p) == 0:
            raise DomainError("homogeneous vector must be finite and nonzero")
        return canonical_gauge(p)
    return p


def points_equal(model: KahlerModel, p, q, tol=1e-9) -> bool:
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if model.is_projective:
        overlap = abs(np.vdot(p, q)) / (np.linalg.norm(p) * np.linalg.norm(q))
        return overlap >= 1 - tol
    return bool(np.linalg.norm(p - q) <= tol * (1 + np.linalg.norm(p)))


def distance(model: KahlerModel, p, q) -> float:
    """Geodesic distance; Fubini-Study distance is sqrt(fs_scale) * arccos|<p,q>|.

    The angle is taken as atan2(sin, cos) so nearby points keep full precision.
    """
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if not model.is_projective:
        return float(np.linalg.norm(p - q))
    p = p / np.linalg.norm(p)
    q = q / np.linalg.norm(q)
    overlap = np.vdot(q, p)
    sin = np.linalg.norm(p - overlap * q)
    return float(np.sqrt(model.fs_scale) * np.arctan2(sin, abs(overlap)))


def from_affine_chart(z):
    """Unit homogeneous vector for the affine chart point ``z`` (chart p0 != 0)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    p = np.concatenate([[1.0 + 0j], z])
    return p / np.linalg.norm(p)


def chart_tangent(z, dz):
    """Horizontal lift at ``from_affine_chart(z)`` of the chart vector ``dz``."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    dz = np.atleast_1d(np.asarray(dz, dtype=complex))
    w = np.concatenate([[1.0 + 0j], z])
    nw = np.linalg.norm(w)
    dw = np.concatenate([[0j], dz])
    # derivative of w/|w| followed by horizontal projection
    v = dw / nw
    p = w / nw
    return v - p * np.vdot(p, v)


# ---------------------------------------------------------------------------
# metric primitives


def check_tangent(model: KahlerModel, p, v, tol=TANGENT_TOL):
    if not model.is_projective:
        return
    p = np.asarray(p, dtype=complex)
    v = np.asarray(v, dtype=complex)
    c = np.vdot(p, v)
    scale = tol * (1 + np.linalg.norm(v))
    if abs(c.real) > scale:
        raise DomainError(f"vector is not tangent: not orthogonal to p (Re<p,v> = {c.real:.3e})")
    if abs(c.imag) > scale:
        raise DomainError(f"vector is not tangent: not orthogonal to i*p (Im<p,v> = {c.imag:.3e})")


def metric_eval(model: KahlerModel, p, v, w) -> float:
    """Riemannian metric g_p(v, w) = omega(v, J w)."""
    check_tangent(model, p, v)
    check_tangent(model, p, w)
    return _g(model, v, w)


def _g(model, v, w):
    val = np.vdot(np.asarray(v, dtype=complex), np.asarray(w, dtype=complex)).real
    return float(model.fs_scale * val) if model.is_projective else float(val)


def complex_structure(model: KahlerModel, p, v):
    check_tangent(model, p, v)
    return 1j * np.asarray(v, dtype=complex)


def symplectic_form(model: KahlerModel, p, v, w) -> float:
    """omega(v, w) = g(Jv, w)."""
    check_tangent(model, p, v)
    check_tangent(model, p, w)
    return _g(model, 1j * np.asarray(v, dtype=complex), w)


def horizontal(p, v):
    """Project ``v`` onto the horizontal space at the unit vector ``p``."""
    p = np.asarray(p, dtype=complex)
    v = np.asarray(v, dtype=complex)
    return v - p * np.vdot(p, v)


def retract(model: KahlerModel, p, v):
    """Move from ``p`` along the tangent vector ``v`` (normalised sum for CP^m)."""
    q = np.asarray(p, dtype=complex) + np.asarray(v, dtype=complex)
    if model.is_projective:
        return q / np.linalg.norm(q)
    return q


# ---------------------------------------------------------------------------
# Lagrangians


@dataclass(frozen=True, eq=False)
class LagrangianChart:
    """A Lagrangian submanifold of one of the built-in models.

    LinearPlane (flat): ``offset + basis @ diag(exp(i*phases)) @ R^m``.
    RealProjective (CP^m): ``[unitary @ x]`` for real ``x``.
    """

    model: KahlerModel
    kind: ChartKind
    matrix: np.ndarray
    offset: np.ndarray | None = None
    label: int = 0
    name: str = field(default="")

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.model.ambient_dim
        if mat.shape != (d, d):
            raise DomainError(f"chart matrix must be {d}x{d}, got {mat.shape}")
        if np.linalg.norm(mat.conj().T @ mat - np.eye(d)) > 1e-9:
            raise DomainError("chart matrix must be unitary")
        object.__setattr__(self, "matrix", mat)
        if self.kind is ChartKind.LINEAR_PLANE:
            if self.model.is_projective:
                raise DomainError("LinearPlane charts live in the flat model")
            off = np.zeros(d, complex) if self.offset is None else np.asarray(self.offset, complex)
            object.__setattr__(self, "offset", off.reshape(d))
        elif not self.model.is_projective:
            raise DomainError("RealProjective charts live in the projective model")


def linear_plane(model: KahlerModel, phases=None, basis=None, offset=None, label=0):
    m = model.m
    phases = np.zeros(m) if phases is None else np.asarray(phases, dtype=float).reshape(m)
    basis = np.eye(m, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
    return LagrangianChart(model, ChartKind.LINEAR_PLANE, basis @ np.diag(np.exp(1j * phases)),
                           offset=offset, label=label)


def real_projective(model: KahlerModel, unitary=None, label=0):
    d = model.ambient_dim
    U = np.eye(d, dtype=complex) if unitary is None else np.asarray(unitary, dtype=complex)
    return LagrangianChart(model, ChartKind.REAL_PROJECTIVE, U, label=label)


def real_axis_rotation(angle: float, m: int = 1):
    r"""Unitary of CP^m rotating CP^1 = {p_2 = ... = 0} by ``angle`` about the axis
    through [1:1] and [1:-1]; remaining coordinates are multiplied by ``1j``.

    With ``angle = pi/2`` the image of RP^1 is the unit circle |z| = 1 in the
    affine chart and the extra factor keeps RP^m and its image transverse.
    """
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    U = np.eye(m + 1, dtype=complex) * 1j
    U[:2, :2] = np.array([[c, -1j * s], [-1j * s, c]])
    return U


def _householder_complement(x):
    """Real orthonormal basis (rows) of the complement of the real unit vector ``x``."""
    x = np.asarray(x, dtype=float)
    if x[0] < 0:
        x = -x
    e0 = np.zeros_like(x)
    e0[0] = 1.0
    w = e0 - x
    nw = w @ w
    H = np.eye(len(x))
    if nw > 1e-30:
        H -= 2.0 * np.outer(w, w) / nw
    return H[:, 1:].T


def _real_representative(L: LagrangianChart, p):
    """(x, lam1, lam2, phase) with ``unitary @ x`` the nearest real point to ``p``."""
    q = L.matrix.conj().T @ np.asarray(p, dtype=complex)
    q = q / np.linalg.norm(q)
    a, b = q.real, q.imag
    M = np.outer(a, a) + np.outer(b, b)
    vals, vecs = np.linalg.eigh(M)
    x = vecs[:, -1]
    lam1 = vals[-1]
    lam2 = vals[-2] if len(vals) > 1 else 0.0
    c = np.vdot(L.matrix @ x, p)
    return x, lam1, lam2, c


def membership(L: LagrangianChart, p, tol=MEMBERSHIP_TOL) -> bool:
    return bool(distance_to(L, p) <= tol)


def distance_to(L: LagrangianChart, p) -> float:
    """Distance from ``p`` to the Lagrangian (FS distance for RealProjective)."""
    p = np.asarray(p, dtype=complex)
    if L.kind is ChartKind.LINEAR_PLANE:
        return float(np.linalg.norm(p - _project_linear(L, p)))
    p = p / np.linalg.norm(p)
    x, _, _, c = _real_representative(L, p)
    # residual norm is sin(angle); better conditioned than arccos near zero
    resid = np.linalg.norm(p - (L.matrix @ x) * c)
    return float(np.sqrt(L.model.fs_scale) * np.arcsin(min(1.0, resid)))


def _project_linear(L, p):
    Q = L.matrix
    r = (Q.conj().T @ (p - L.offset)).real
    return L.offset + Q @ r


def lagrangian_project(L: LagrangianChart, p):
    """Nearest point of ``L`` to ``p``.

    Exact orthogonal projection for LinearPlane. For RealProjective the nearest
    real point is the top eigenvector of ``aa^T + bb^T`` where ``a + ib`` are the
    coordinates of ``p`` in the chart frame; the result is returned in canonical
    gauge. Raises ProjectionError beyond PROJECTION_RADIUS or when the top
    eigenvalue is degenerate.
    """
    p = np.asarray(p, dtype=complex)
    if L.kind is ChartKind.LINEAR_PLANE:
        return _project_linear(L, p)
    x, lam1, lam2, _ = _real_representative(L, p)
    dist = distance_to(L, p)
    if dist > PROJECTION_RADIUS:
        raise ProjectionError(
            f"point is {dist:.4f} from the Lagrangian, beyond the projection radius "
            f"{PROJECTION_RADIUS:.4f}", margin=dist - PROJECTION_RADIUS)
    if lam1 - lam2 < 1e-12:
        raise ProjectionError("nearest point is not unique (degenerate eigenvalues)",
                              margin=lam1 - lam2)
    return canonical_gauge(L.matrix @ x)


def lagrangian_tangent_frame(L: LagrangianChart, p, check=True):
    """g-orthonormal real basis of T_pL, as rows of an (m, ambient_dim) array.

    For CP^m the vectors are horizontal at ``p`` in the gauge of ``p`` itself.
    """
    p = np.asarray(p, dtype=complex)
    if check and not membership(L, p, tol=1e-6):
        raise DomainError("point is not on the Lagrangian")
    if L.kind is ChartKind.LINEAR_PLANE:
        return L.matrix.T.copy()
    x, _, _, c = _real_representative(L, p)
    phase = c / abs(c)
    # p = phase * U x up to rounding; tangent vectors follow the same gauge
    rows = _householder_complement(x)
    frame = (phase * (L.matrix @ rows.T)).T
    return frame / np.sqrt(L.model.fs_scale)


def transversal_intersections(La: LagrangianChart, Lb: LagrangianChart):
    """All intersection points of two charts as a list of ``(point, is_transversal)``."""
    if La.model != Lb.model:
        raise DomainError("charts belong to different models")
    if La.kind is ChartKind.LINEAR_PLANE and Lb.kind is ChartKind.LINEAR_PLANE:
        return _linear_intersections(La, Lb)
    if La.kind is ChartKind.REAL_PROJECTIVE and Lb.kind is ChartKind.REAL_PROJECTIVE:
        return _projective_intersections(La, Lb)
    raise DomainError("unsupported chart pair")


def _linear_intersections(La, Lb):
    m = La.model.m
    # offset_a + Qa r = offset_b + Qb s, real unknowns (r, s)
    A = np.hstack([La.matrix, -Lb.matrix])
    A_real = np.vstack([A.real, A.imag])
    rhs = Lb.offset - La.offset
    b_real = np.concatenate([rhs.real, rhs.imag])
    sv = np.linalg.svd(A_real, compute_uv=False)
    if sv[-1] < 1e-10 * max(1.0, sv[0]):
        sol, *_ = np.linalg.lstsq(A_real, b_real, rcond=None)
        if np.linalg.norm(A_real @ sol - b_real) < 1e-9 * (1 + np.linalg.norm(b_real)):
            raise NonTransverseError("non-transverse pair: intersection is not discrete")
        return []
    sol = np.linalg.solve(A_real, b_real)
    point = La.offset + La.matrix @ sol[:m]
    return [(point, True)]


def _projective_intersections(La, Lb):
    V = Lb.matrix.conj().T @ La.matrix
    S = V.conj().T @ V.conj()
    S = 0.5 * (S + S.T)
    # S is symmetric unitary: S = O diag(e^{i phi}) O^T with O real orthogonal.
    # Real eigenvectors x give the intersection points [Ua x].
    eig = np.linalg.eigvals(S)
    phis = np.sort(np.angle(eig))
    d = len(phis)
    gaps = np.abs(np.diff(np.concatenate([phis, [phis[0] + 2 * np.pi]])))
    if d > 1 and gaps.min() < 1e-8:
        raise NonTransverseError("non-transverse pair: intersection is not discrete")
    M = S.real + 0.5772156649 * S.imag
    _, vecs = np.linalg.eigh(M)
    out = []
    for x in vecs.T:
        if np.linalg.norm(S @ x - (x @ S @ x) * x) > 1e-8:
            raise NonTransverseError("failed to resolve intersection eigenvectors")
        point = canonical_gauge(La.matrix @ x)
        out.append((point, _is_transversal(La, Lb, point)))
    return out


def _is_transversal(La, Lb, p) -> bool:
    fa = lagrangian_tangent_frame(La, p, check=False)
    fb = lagrangian_tangent_frame(Lb, p, check=False)
    F = np.vstack([fa, fb])
    F_real = np.hstack([F.real, F.imag])
    sv = np.linalg.svd(F_real, compute_uv=False)
    # in CP^m the horizontal space has real dimension 2m inside R^{2m+2}
    return bool(sv[2 * La.model.m - 1] > 1e-8 * sv[0])
