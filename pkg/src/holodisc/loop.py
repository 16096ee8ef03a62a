"""Loops of Lagrangian planes along the boundary of a disc and their Maslov index.

A Lagrangian plane in C^m is stored as a unitary Q with plane Q R^m; two
unitaries describe the same plane iff they differ on the right by a real
orthogonal matrix. det(Q)^2 and Q Q^T only depend on the plane.

The loop of a map field is sampled on a uniform angle grid. Around each
marked point a short window holds the corner path from the incoming to the
outgoing tangent plane; the rest of each boundary arc is traversed with a
C-infinity transition so that the loop is smooth where the pieces meet.
The boundary trace of an arc is a Chebyshev least-squares fit of the nodal
values against normalized chord length, which removes the square-root
behaviour of the trace near transversal corners. Both choices keep the
Fourier coefficients of the loop decaying fast enough for the partial-index
rank decisions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev
from scipy.linalg import polar

from . import kahler
from .errors import ClosureError, CornerNormalizationError, DomainError, SamplingError
from .fields import MapField, chart_differential, chart_metric, chart_to_points, points_to_chart

UNITARY_TOL = 1e-10
COSET_TOL = 1e-8
PLANE_GAP = np.pi / 4          # max principal angle between consecutive samples
UNWRAP_STEP = np.pi / 2        # max det^2 phase step before the unwrap is ambiguous
INTEGER_TOL = 0.1
CORNER_WINDOW = 0.25           # fraction of the half-arc used by each corner path
TRANSVERSE_TOL = 1e-8


TRACE_DEGREE = 24


def smoothstep(t):
    """C-infinity ramp from 0 to 1, flat to all orders at both ends."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / t), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / (1.0 - t)), 0.0)
    return a / (a + b)


class LagrangianPlane:
    """The plane Q R^m for a unitary Q."""

    __slots__ = ("Q",)

    def __init__(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=complex))
        m = Q.shape[0]
        if Q.shape != (m, m) or np.linalg.norm(Q.conj().T @ Q - np.eye(m)) > UNITARY_TOL * max(1, m):
            raise DomainError("plane representative must be a unitary matrix")
        self.Q = Q

    @classmethod
    def real(cls, m):
        return cls(np.eye(m))

    @classmethod
    def imaginary(cls, m):
        return cls(1j * np.eye(m))

    @property
    def m(self):
        return self.Q.shape[0]

    def symbol(self):
        """Q Q^T, the image of the plane under the embedding U(m)/O(m) -> U(m)."""
        return self.Q @ self.Q.T

    def det2(self):
        return np.linalg.det(self.Q) ** 2

    def principal_angles(self, other: "LagrangianPlane") -> np.ndarray:
        """Angles in (-pi/2, pi/2] rotating this plane onto ``other``."""
        return _principal_angles(self.Q, other.Q)

    def __eq__(self, other):
        if not isinstance(other, LagrangianPlane) or other.m != self.m:
            return NotImplemented
        return bool(np.linalg.norm(self.symbol() - other.symbol()) < COSET_TOL)

    def __hash__(self):
        return hash(np.round(self.symbol(), 6).tobytes())

    def __repr__(self):
        return f"LagrangianPlane(m={self.m})"


def _principal_angles(Q1, Q2):
    W = Q1.conj().T @ Q2
    eig = np.linalg.eigvals(W @ W.T)
    ang = np.angle(eig) / 2
    return np.sort(np.where(ang <= -np.pi / 2 + 1e-15, ang + np.pi, ang))


def canonical_short_path(start: LagrangianPlane, t: float) -> LagrangianPlane:
    """The path e^{-i pi t / 2} R^m from R^m (at t=0) to i R^m (at t=1).

    ``start`` must be R^m: the corner gauge has already been normalized.
    """
    if start != LagrangianPlane.real(start.m):
        raise CornerNormalizationError("canonical short path starts at R^m; normalize the corner gauge first")
    return LagrangianPlane(start.Q * np.exp(-0.5j * np.pi * t))


def corner_rotation(Q_in, Q_out):
    """Real orthogonal O and angles a in (0, pi) with Q_out R^m = Q_in O diag(e^{ia}) R^m.

    Raises CornerNormalizationError if the planes are not transverse (some angle
    is 0 mod pi) or the symmetric unitary cannot be diagonalized by a real basis.
    """
    W = Q_in.conj().T @ Q_out
    S = W @ W.T
    S = 0.5 * (S + S.T)
    # S is symmetric unitary, so Re S and Im S are commuting real symmetric matrices
    _, O = np.linalg.eigh(S.real + 0.5772156649 * S.imag)
    D = O.T @ S @ O
    d = np.diag(D).copy()
    if np.linalg.norm(D - np.diag(d)) > 1e-8:
        raise CornerNormalizationError("corner tangent planes admit no real diagonalizing frame")
    if np.min(np.abs(d - 1.0)) < TRANSVERSE_TOL:
        raise CornerNormalizationError("tangent Lagrangians at a corner are not transverse")
    a = np.mod(np.angle(d) / 2, np.pi)
    return O, a


def corner_path(Q_in, Q_out, t, clockwise=True):
    """Unitary representative at time t of the short rotation from Q_in R^m to Q_out R^m.

    Each principal direction turns by its angle a (counterclockwise) or by
    a - pi (clockwise), so the det^2 phase moves by 2a or 2(a - pi).
    """
    O, a = corner_rotation(Q_in, Q_out)
    turn = (a - np.pi) if clockwise else a
    return Q_in @ O @ np.diag(np.exp(1j * turn * t))


# ---------------------------------------------------------------------------
# loops


@dataclass(frozen=True, eq=False)
class GrassmannianLoop:
    """Samples (angle, Q) of a closed loop of Lagrangian planes.

    ``factors`` optionally holds, per sample, the GL matrix F such that the
    columns of F Q are the plane's frame in a holomorphic trivialization; the
    symbol of the loop is then A conj(A)^{-1} with A = F Q. ``source`` rebuilds
    the loop at a given sampling density, enabling automatic resampling.
    """

    angles: np.ndarray
    Q: np.ndarray
    kinds: tuple = ()
    factors: np.ndarray | None = None
    source: Callable[[int], "GrassmannianLoop"] | None = field(default=None, repr=False)
    samples_per_arc: int = 0

    def __post_init__(self):
        ang = np.asarray(self.angles, dtype=float)
        Q = np.asarray(self.Q, dtype=complex)
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "Q", Q)
        if not self.kinds:
            object.__setattr__(self, "kinds", ("explicit",) * len(ang))
        if Q.ndim != 3 or Q.shape[0] != len(ang) or Q.shape[1] != Q.shape[2]:
            raise DomainError("Q must have shape (samples, m, m) matching the angles")
        if len(ang) < 3 or np.any(np.diff(ang) <= 0) or ang[0] < 0 or ang[-1] >= 2 * np.pi:
            raise DomainError("loop angles must be strictly increasing in [0, 2pi)")
        m = Q.shape[1]
        err = np.linalg.norm(np.einsum("sji,sjk->sik", Q.conj(), Q) - np.eye(m), axis=(1, 2))
        if np.max(err) > 1e-8:
            raise DomainError("loop samples must be unitary")

    @property
    def m(self):
        return self.Q.shape[1]

    def __len__(self):
        return len(self.angles)

    def plane(self, i) -> LagrangianPlane:
        return LagrangianPlane(self.Q[i])

    def gaps(self) -> np.ndarray:
        """Largest principal angle between each sample and the next (cyclically)."""
        nxt = np.roll(self.Q, -1, axis=0)
        return np.array([np.max(np.abs(_principal_angles(a, b))) for a, b in zip(self.Q, nxt)])

    @property
    def closed(self) -> bool:
        return bool(self.gaps()[-1] < PLANE_GAP)

    def check_sampling(self):
        g = self.gaps()
        if np.max(g) >= PLANE_GAP:
            i = int(np.argmax(g))
            raise SamplingError(f"consecutive planes at samples {i},{(i + 1) % len(g)} differ by "
                                f"{g[i]:.3g} rad; increase samples_per_arc")

    def holomorphic_frames(self) -> np.ndarray:
        return self.Q if self.factors is None else self.factors @ self.Q

    def reversed(self) -> "GrassmannianLoop":
        """Same planes traversed clockwise: sample at angle 2pi - theta."""
        order = np.r_[0, np.arange(len(self) - 1, 0, -1)]
        ang = np.mod(2 * np.pi - self.angles[order], 2 * np.pi)
        fac = None if self.factors is None else self.factors[order]
        return GrassmannianLoop(ang, self.Q[order], tuple(self.kinds[i] for i in order), fac)

    def with_gauge(self, O) -> "GrassmannianLoop":
        """Right-multiply every sample by the real orthogonal matrices ``O`` (samples, m, m)."""
        return GrassmannianLoop(self.angles, self.Q @ O, self.kinds, self.factors)

    @classmethod
    def from_function(cls, f, samples: int) -> "GrassmannianLoop":
        """Sample ``f(theta)`` -> unitary on a uniform grid; resampling calls f again."""
        ang = 2 * np.pi * np.arange(samples) / samples
        Q = np.array([np.atleast_2d(f(a)) for a in ang], dtype=complex)
        return cls(ang, Q, source=lambda k: cls.from_function(f, k), samples_per_arc=samples)

    def resample(self, factor: int = 4) -> "GrassmannianLoop":
        if self.source is None:
            raise SamplingError("loop has no source to resample from")
        return self.source(self.samples_per_arc * factor)

    def to_csv(self, path) -> Path:
        path = Path(path)
        m = self.m
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            header = ["theta"]
            for i in range(m):
                for j in range(m):
                    header += [f"re_q{i}{j}", f"im_q{i}{j}"]
            w.writerow(header + ["segment_kind"])
            for a, Q, k in zip(self.angles, self.Q, self.kinds):
                row = [repr(float(a))]
                for z in Q.ravel():
                    row += [repr(float(z.real)), repr(float(z.imag))]
                w.writerow(row + [k])
        return path


def concatenate(first: GrassmannianLoop, second: GrassmannianLoop) -> GrassmannianLoop:
    """Loop running ``first`` on [0, pi) and ``second`` on [pi, 2pi); they must share a basepoint."""
    if first.m != second.m or LagrangianPlane(first.Q[0]) != LagrangianPlane(second.Q[0]):
        raise ClosureError("loops to concatenate must start at the same plane")
    ang = np.r_[first.angles / 2, np.pi + second.angles / 2]
    Q = np.concatenate([first.Q, second.Q])
    if (first.factors is None) != (second.factors is None):
        raise DomainError("cannot concatenate loops with and without holomorphic factors")
    fac = None if first.factors is None else np.concatenate([first.factors, second.factors])
    return GrassmannianLoop(ang, Q, tuple(first.kinds) + tuple(second.kinds), fac)


def det2_phase_steps(loop: GrassmannianLoop) -> np.ndarray:
    d = np.linalg.det(loop.Q) ** 2
    d = d / np.abs(d)
    return np.angle(np.roll(d, -1) / d)


def maslov_index(loop: GrassmannianLoop) -> int:
    """Winding number of det(Q)^2 around the closed loop.

    If some phase step exceeds pi/2 the loop is rebuilt once at 4x density
    (when it knows how); a second failure raises SamplingError.
    """
    try:
        return _winding(loop)
    except SamplingError:
        if loop.source is None:
            raise
    return _winding(loop.resample(4))


def _winding(loop):
    steps = det2_phase_steps(loop)
    if np.max(np.abs(steps)) > UNWRAP_STEP:
        i = int(np.argmax(np.abs(steps)))
        raise SamplingError(f"det^2 phase jumps by {steps[i]:.3g} rad after sample {i}")
    w = np.sum(steps) / (2 * np.pi)
    k = int(np.rint(w))
    if abs(w - k) > INTEGER_TOL:
        raise ClosureError(f"det^2 winding {w:.3f} is not an integer; the loop is not closed")
    return k


# ---------------------------------------------------------------------------
# loops of map fields


@dataclass(frozen=True)
class PlanePath:
    """Tangent planes of L_k along the boundary trace of one arc."""

    arc: int
    angles: np.ndarray      # disc angles of the samples
    points: np.ndarray      # ambient points on L_k
    Q: np.ndarray           # unitary representatives
    factors: np.ndarray     # holomorphic-frame factors


@dataclass(frozen=True)
class _ArcTrace:
    """Smooth fit z(sigma), sigma in [0, 1] the normalized chord length of the nodal trace."""

    coef: np.ndarray
    start: np.ndarray
    end: np.ndarray
    node_sigma: np.ndarray
    node_angle: np.ndarray

    def __call__(self, sigma):
        x = 2 * np.asarray(sigma, dtype=float) - 1
        base = np.outer((1 - x) / 2, self.start) + np.outer((1 + x) / 2, self.end)
        return base + ((1 - x**2)[:, None] * chebyshev.chebvander(x, len(self.coef) - 1)) @ self.coef

    def sigma_at_angle(self, angle):
        return np.interp(angle, self.node_angle, self.node_sigma)


def _arc_trace(u: MapField, k: int) -> _ArcTrace:
    """Fit of the chart trace of arc k that interpolates both corner values exactly."""
    mesh = u.mesh
    idx = mesh.arc_nodes(k)
    z = u.coords[idx]
    ang = np.unwrap(np.angle(mesh.complex_nodes[idx]))
    ang = ang - 2 * np.pi * np.round((ang[0] - 2 * np.pi * (k - 1) / mesh.n) / (2 * np.pi))
    chord = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(z, axis=0), axis=1))]
    sigma = chord / chord[-1] if chord[-1] > 0 else (ang - ang[0]) / (ang[-1] - ang[0])
    x = 2 * sigma - 1
    degree = max(min(TRACE_DEGREE, len(idx) - 3), 0)
    basis = (1 - x**2)[:, None] * chebyshev.chebvander(x, degree)
    resid = z - np.outer((1 - x) / 2, z[0]) - np.outer((1 + x) / 2, z[-1])
    coef, *_ = np.linalg.lstsq(basis[1:-1], resid[1:-1], rcond=None)
    return _ArcTrace(coef, z[0], z[-1], sigma, ang)


def _frames_at(u: MapField, L, z_samples):
    """Project chart samples onto L and return (points, Q, factors)."""
    model = u.model
    m = model.m
    pts, Qs, Fs = [], [], []
    for z in z_samples:
        if model.is_projective:
            p = kahler.lagrangian_project(L, chart_to_points(u.chart, z[None, :])[0])
        else:
            p = kahler.lagrangian_project(L, z)
        Q, F = _plane_at(u, L, p)
        pts.append(p)
        Qs.append(Q)
        Fs.append(F)
    return np.array(pts), np.array(Qs).reshape(-1, m, m), np.array(Fs).reshape(-1, m, m)


def _plane_at(u: MapField, L, p):
    """Unitary plane representative of T_p L in the trivialization h^{1/2} dz, and h^{-1/2}."""
    frame = kahler.lagrangian_tangent_frame(L, p, check=False)
    m = u.model.m
    if not u.model.is_projective:
        return polar(frame.T)[0], np.eye(m, dtype=complex)
    D = chart_differential(u.chart, p, frame).T          # columns: chart images of the frame
    z = points_to_chart(u.chart, p[None, :])[0]
    vals, vecs = np.linalg.eigh(chart_metric(u.model, z))
    root = (vecs * np.sqrt(vals)) @ vecs.conj().T
    inv_root = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return polar(root @ D)[0], inv_root


def boundary_frames(u: MapField, lagrangians, samples_per_arc: int) -> list[PlanePath]:
    """Plane path of T L_k along each arc, sampled uniformly in angle, corners included."""
    if samples_per_arc < 2:
        raise DomainError("samples_per_arc must be at least 2")
    out = []
    for k in range(1, u.mesh.n + 1):
        trace = _arc_trace(u, k)
        ang = np.linspace(trace.node_angle[0], trace.node_angle[-1], samples_per_arc)
        pts, Q, F = _frames_at(u, lagrangians[k - 1], trace(trace.sigma_at_angle(ang)))
        path = PlanePath(k, ang, pts, Q, F)
        g = [np.max(np.abs(_principal_angles(a, b))) for a, b in zip(Q[:-1], Q[1:])]
        if g and max(g) >= PLANE_GAP:
            raise SamplingError(f"tangent planes along arc {k} jump by {max(g):.3g} rad; "
                                "increase samples_per_arc")
        out.append(path)
    return out


def assemble_loop(u: MapField, lagrangians, samples_per_arc: int = 512, resample=True) -> GrassmannianLoop:
    """Closed loop of tangent planes of the boundary trace, with corner paths inserted.

    The loop is sampled at theta_j = 2 pi j / (n * samples_per_arc). Within a
    window of half-width (pi/n)/4 around each marked point the plane turns from
    T L_k to T L_{k+1} at the image point: clockwise at x_k, counterclockwise at
    y = u(1). The window around y straddles theta = 0; this is a rotation of the
    convention that starts at 1 and inserts the path at y last.

    If consecutive samples are too far apart the loop is rebuilt once at 4x
    density (``resample=False`` disables this) before SamplingError is raised.
    """
    mesh = u.mesh
    n = mesh.n
    if len(lagrangians) != n:
        raise DomainError(f"need {n} Lagrangians, got {len(lagrangians)}")
    total = n * samples_per_arc
    theta = 2 * np.pi * np.arange(total) / total
    span = 2 * np.pi / n
    half = CORNER_WINDOW * span / 2
    m = u.model.m

    Q = np.empty((total, m, m), complex)
    F = np.empty((total, m, m), complex)
    kinds = [""] * total

    # corner k sits at angle k*span; corner 0 is y, between arc n and arc 1
    rel = np.mod(theta + half, span) - half
    corner = np.mod(np.rint((theta - rel) / span).astype(int), n)
    in_corner = np.abs(rel) < half
    pts = u.points()
    for k in range(n):
        sel = np.nonzero(in_corner & (corner == k))[0]
        if len(sel) == 0:
            continue
        node = mesh.marked[k]
        L_in = lagrangians[(k - 1) % n]
        L_out = lagrangians[k]
        p = pts[node]
        Qi, Fi = _plane_at(u, L_in, kahler.lagrangian_project(L_in, p))
        Qo, _ = _plane_at(u, L_out, kahler.lagrangian_project(L_out, p))
        t = smoothstep((rel[sel] + half) / (2 * half))
        clockwise = k != 0
        try:
            for j, tj in zip(sel, t):
                Q[j] = corner_path(Qi, Qo, tj, clockwise)
        except CornerNormalizationError as exc:
            name = "y" if k == 0 else f"x_{k}"
            raise CornerNormalizationError(f"at {name}: {exc}") from exc
        F[sel] = Fi
        for j in sel:
            kinds[j] = "short-path y" if k == 0 else f"short-path x{k}"

    for k in range(1, n + 1):
        sel = np.nonzero(~in_corner & (np.floor(theta / span).astype(int) == k - 1))[0]
        if len(sel) == 0:
            continue
        trace = _arc_trace(u, k)
        tau = (theta[sel] - (k - 1) * span - half) / (span - 2 * half)
        _, Qa, Fa = _frames_at(u, lagrangians[k - 1], trace(smoothstep(tau)))
        Q[sel] = Qa
        F[sel] = Fa
        for j in sel:
            kinds[j] = f"arc {k}"

    factors = None if not u.model.is_projective else F
    loop = GrassmannianLoop(theta, Q, tuple(kinds), factors,
                            source=lambda s: assemble_loop(u, lagrangians, s, resample=False),
                            samples_per_arc=samples_per_arc)
    try:
        loop.check_sampling()
    except SamplingError:
        if not resample:
            raise
        return assemble_loop(u, lagrangians, 4 * samples_per_arc, resample=False)
    return loop
