"""Partial indices of matrix symbols on the unit circle.

A symbol G(zeta) invertible on the circle factors as

    G = Theta diag(zeta^k_1, ..., zeta^k_m) conj(Theta)^{-1}

with Theta holomorphic and invertible on the closed disc. The integers
k_1 >= ... >= k_m are found without computing Theta: the space of
psi = zeta^{-s} (polynomial in 1/zeta) with G psi free of negative
frequencies has dimension d(s) = sum_j max(k_j - s + 1, 0), so the first
differences of d count the indices >= s and the second differences give
their multiplicities. Each d(s) is the kernel dimension of a truncated
block-Toeplitz matrix, read off its singular values.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, DomainError, IndeterminateRankError, TruncationError
from .loop import GrassmannianLoop

KERNEL_THRESHOLD = 1e-8      # singular values below this fraction of the largest are kernel
AMBIGUITY_BAND = 1e3         # no singular value may fall within this factor above the threshold
TAIL_TOLERANCE = 1e-6        # Fourier energy allowed beyond the truncation order
BANDWIDTH_ENERGY = 1e-8
CONDITION_LIMIT = 1e8
CHECK_GRID = 256
MAX_INDEX = 64

GRIFFITHS_NOTE = ("griffiths_positive means min(kappa) > 0, i.e. every line summand O(kappa) "
                  "of the doubled bundle has positive degree")


class ExistenceVerdict(enum.Enum):
    ALL_AT_LEAST_ONE = "AllAtLeastOne"
    ALL_AT_MOST_MINUS_ONE = "AllAtMostMinusOne"
    INCONCLUSIVE = "Inconclusive"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class MatrixSymbol:
    """Fourier coefficients of a matrix function on the circle, frequencies -N..N."""

    coefficients: np.ndarray          # (2N+1, m, m); row N is frequency 0
    source: str = "explicit"

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim == 2:
            c = c[:, None, None]
        if c.ndim != 3 or c.shape[0] % 2 != 1 or c.shape[1] != c.shape[2]:
            raise DomainError("coefficients must have shape (2N+1, m, m)")
        object.__setattr__(self, "coefficients", c)

    @property
    def N(self) -> int:
        return (self.coefficients.shape[0] - 1) // 2

    @property
    def m(self) -> int:
        return self.coefficients.shape[1]

    @property
    def fourier(self) -> dict:
        """Nonzero coefficients keyed by frequency."""
        N = self.N
        return {k - N: c for k, c in enumerate(self.coefficients) if np.any(c != 0)}

    def coefficient(self, k: int) -> np.ndarray:
        if abs(k) > self.N:
            return np.zeros((self.m, self.m), complex)
        return self.coefficients[k + self.N]

    def evaluate(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        freqs = np.arange(-self.N, self.N + 1)
        phase = np.exp(1j * np.outer(theta, freqs))
        return np.einsum("sk,kij->sij", phase, self.coefficients)

    def samples(self, count: int = CHECK_GRID) -> np.ndarray:
        return self.evaluate(2 * np.pi * np.arange(count) / count)

    def check_invertible(self, count: int = CHECK_GRID):
        # smallest singular value against the largest anywhere on the circle, so
        # that scalar symbols with a zero are caught too
        sv = np.linalg.svd(self.samples(max(count, 4 * self.N + 4)), compute_uv=False)
        top = sv[:, 0].max()
        if top == 0 or sv[:, -1].min() * CONDITION_LIMIT <= top:
            worst = np.inf if top == 0 else top / max(sv[:, -1].min(), 1e-300)
            raise DomainError(f"symbol is not invertible on the circle (condition {worst:.3g})")

    def det_winding(self, count: int | None = None) -> int:
        """Winding number of det G around the circle, by phase unwrapping on a fine grid."""
        count = count or max(CHECK_GRID, 16 * self.N + 16)
        d = np.linalg.det(self.samples(count))
        if np.any(d == 0):
            raise DomainError("det G vanishes on the circle")
        steps = np.angle(np.roll(d, -1) / d)
        if np.max(np.abs(steps)) > np.pi / 2:
            if count > 2**16:
                raise DomainError("det G winds too fast to unwrap; is the symbol invertible?")
            return self.det_winding(4 * count)
        return int(np.rint(np.sum(steps) / (2 * np.pi)))

    @classmethod
    def from_dict(cls, fourier: dict, m: int | None = None, source="explicit") -> "MatrixSymbol":
        if not fourier:
            raise DomainError("empty Fourier dictionary")
        N = max(abs(int(k)) for k in fourier)
        first = np.atleast_2d(np.asarray(next(iter(fourier.values())), dtype=complex))
        m = m or first.shape[0]
        c = np.zeros((2 * N + 1, m, m), complex)
        for k, v in fourier.items():
            c[int(k) + N] = np.atleast_2d(v)
        return cls(c, source)

    @classmethod
    def from_samples(cls, values, N: int | None = None, source="explicit") -> "MatrixSymbol":
        """Trapezoidal Fourier transform of samples on a uniform grid starting at angle 0.

        With ``N`` omitted the truncation is four times the empirical bandwidth.
        Raises TruncationError if more than 1e-6 of the energy lies beyond N.
        """
        values = np.asarray(values, dtype=complex)
        if values.ndim == 1:
            values = values[:, None, None]
        M = len(values)
        spec = np.fft.fft(values, axis=0) / M
        freqs = np.fft.fftfreq(M, 1.0 / M).astype(int)
        energy = np.sum(np.abs(spec) ** 2, axis=(1, 2))
        total = np.sum(energy)
        if N is None:
            N = 4 * _bandwidth(freqs, energy, total)
        N = min(int(N), (M - 1) // 2)
        tail = np.sum(energy[np.abs(freqs) > N])
        if total > 0 and tail > TAIL_TOLERANCE * total:
            raise TruncationError(f"{tail / total:.2e} of the symbol's energy lies beyond order {N}; "
                                  "sample the loop more densely")
        c = np.zeros((2 * N + 1,) + values.shape[1:], complex)
        for f, v in zip(freqs, spec):
            if abs(f) <= N:
                c[f + N] += v
        return cls(c, source)

    @classmethod
    def from_function(cls, f, N: int, oversample: int = 4) -> "MatrixSymbol":
        M = oversample * (2 * N + 1)
        theta = 2 * np.pi * np.arange(M) / M
        return cls.from_samples(np.array([np.atleast_2d(f(np.exp(1j * t))) for t in theta]), N)

    @classmethod
    def diagonal_monomial(cls, exponents) -> "MatrixSymbol":
        exponents = [int(e) for e in exponents]
        m = len(exponents)
        fourier = {}
        for j, e in enumerate(exponents):
            fourier.setdefault(e, np.zeros((m, m), complex))[j, j] = 1.0
        return cls.from_dict(fourier, m)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["frequency", "row", "col", "re", "im"])
            for k, c in self.fourier.items():
                for i in range(self.m):
                    for j in range(self.m):
                        w.writerow([k, i, j, repr(float(c[i, j].real)), repr(float(c[i, j].imag))])
        return path

    @classmethod
    def read_csv(cls, path) -> "MatrixSymbol":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        m = 1 + max(max(int(r["row"]), int(r["col"])) for r in rows)
        fourier = {}
        for r in rows:
            k = int(r["frequency"])
            fourier.setdefault(k, np.zeros((m, m), complex))[int(r["row"]), int(r["col"])] = \
                float(r["re"]) + 1j * float(r["im"])
        return cls.from_dict(fourier, m)


def _bandwidth(freqs, energy, total):
    if total == 0:
        return 0
    order = np.argsort(np.abs(freqs), kind="stable")
    cum = np.cumsum(energy[order])
    i = int(np.searchsorted(cum, (1 - BANDWIDTH_ENERGY) * total))
    return int(np.abs(freqs[order][min(i, len(order) - 1)]))


def symbol_from_loop(loop: GrassmannianLoop, N: int | None = None) -> MatrixSymbol:
    """G = A conj(A)^{-1} sampled along the loop, with A the loop's holomorphic frames.

    For a loop without holomorphic factors A = Q is unitary and G = Q Q^T, so
    the symbol does not see the O(m) ambiguity of the representatives.
    """
    theta = loop.angles
    M = len(theta)
    if not np.allclose(theta, 2 * np.pi * np.arange(M) / M, atol=1e-12):
        raise DomainError("symbol_from_loop needs a loop sampled on a uniform grid from angle 0")
    A = loop.holomorphic_frames()
    G = A @ np.linalg.inv(A.conj())
    return MatrixSymbol.from_samples(G, N, source="from-loop")


# ---------------------------------------------------------------------------
# partial indices


@dataclass(frozen=True)
class PartialIndexResult:
    kappas: tuple
    mu: int
    doubled_degrees: tuple
    griffiths_positive: bool
    existence_verdict: ExistenceVerdict
    virtual_dimension: int | None = None
    staircase: dict = field(default_factory=dict, compare=False)

    def as_dict(self):
        return {
            "kappas": list(self.kappas),
            "mu": self.mu,
            "doubled_degrees": list(self.doubled_degrees),
            "griffiths_positive": self.griffiths_positive,
            "existence_verdict": str(self.existence_verdict),
            "virtual_dimension": self.virtual_dimension,
        }


def result_from_kappas(kappas, n: int | None = None) -> PartialIndexResult:
    k = tuple(sorted((int(x) for x in kappas), reverse=True))
    mu = sum(k)
    return PartialIndexResult(
        kappas=k, mu=mu, doubled_degrees=k,
        griffiths_positive=griffiths_verdict(k),
        existence_verdict=existence_verdict(k),
        virtual_dimension=None if n is None else virtual_dimension(n, mu),
    )


def _toeplitz_block(G: MatrixSymbol, shift: int, degree: int) -> np.ndarray:
    """Matrix of psi -> negative-frequency part of G psi, psi = sum_{j=0}^{degree} c_j zeta^{-shift-j}."""
    N, m = G.N, G.m
    lowest = -shift - degree - N
    rows = max(-lowest, 0)
    # block (r, j) holds the coefficient of frequency (r + lowest) - (-shift - j)
    k = np.arange(rows)[:, None] + lowest + shift + np.arange(degree + 1)[None, :]
    valid = np.abs(k) <= N
    blocks = np.where(valid[..., None, None], G.coefficients[np.clip(k, -N, N) + N], 0)
    return blocks.transpose(0, 2, 1, 3).reshape(rows * m, (degree + 1) * m)


def kernel_dimension(G: MatrixSymbol, shift: int, degree: int) -> int:
    """d(shift), with the ambiguity-band check on the singular values."""
    T = _toeplitz_block(G, shift, degree)
    cols = T.shape[1]
    if T.shape[0] == 0:
        return cols
    s = np.linalg.svd(T, compute_uv=False)
    s = np.concatenate([s, np.zeros(max(cols - len(s), 0))])
    top = s[0] if s[0] > 0 else 1.0
    small = s < KERNEL_THRESHOLD * top
    band = (~small) & (s < AMBIGUITY_BAND * KERNEL_THRESHOLD * top)
    if np.any(band):
        raise IndeterminateRankError(
            f"singular value {s[band].min() / top:.2e} (relative) at shift {shift} is too close to "
            f"the kernel threshold; increase the truncation order N")
    return int(np.sum(small))


def partial_indices(G: MatrixSymbol, n: int | None = None, degree: int | None = None) -> PartialIndexResult:
    """Sorted partial indices of G, cross-checked against the winding of det G.

    ``n`` (number of marked points) fills in the virtual dimension. ``degree``
    is the polynomial degree of the test space; by default N + 8.
    """
    G.check_invertible()
    m = G.m
    winding = G.det_winding()
    D = degree if degree is not None else G.N + 8
    cache = {}

    def d(s):
        if s not in cache:
            cache[s] = kernel_dimension(G, s, D)
        return cache[s]

    # walk up to a shift with trivial kernel, then down until every index is counted
    top = int(np.ceil(winding / m))
    while d(top) > 0:
        top += 1
        if top > MAX_INDEX:
            raise IndeterminateRankError("partial indices exceed the search range; symbol too wild")
    s = top - 1
    while d(s) - d(s + 1) < m:
        s -= 1
        if s < -MAX_INDEX:
            raise IndeterminateRankError("partial indices exceed the search range; symbol too wild")
    kappas = []
    for t in range(s, top):
        mult = (d(t) - d(t + 1)) - (d(t + 1) - d(t + 2))
        if mult < 0:
            raise IndeterminateRankError(f"kernel staircase is not convex at shift {t}; increase N")
        kappas += [t] * mult
    if len(kappas) != m:
        raise IndeterminateRankError(f"recovered {len(kappas)} indices for a {m}x{m} symbol; increase N")
    result = result_from_kappas(kappas, n)
    if result.mu != winding:
        raise ConsistencyError(f"sum of partial indices {result.mu} differs from det winding {winding}")
    object.__setattr__(result, "staircase", dict(sorted(cache.items())))
    return result


def griffiths_verdict(r) -> bool:
    """True iff every partial index is positive (the doubled bundle is a sum of ample lines)."""
    kappas = r.kappas if isinstance(r, PartialIndexResult) else tuple(r)
    return bool(len(kappas) > 0 and min(kappas) > 0)


def existence_verdict(r) -> ExistenceVerdict:
    kappas = r.kappas if isinstance(r, PartialIndexResult) else tuple(r)
    if kappas and min(kappas) >= 1:
        return ExistenceVerdict.ALL_AT_LEAST_ONE
    if kappas and max(kappas) <= -1:
        return ExistenceVerdict.ALL_AT_MOST_MINUS_ONE
    return ExistenceVerdict.INCONCLUSIVE


def virtual_dimension(n: int, mu: int) -> int:
    if int(n) != n or n < 2:
        raise DomainError("virtual dimension needs at least two marked points")
    return int(n) - 3 + int(mu)


# ---------------------------------------------------------------------------
# test symbols


def random_factorizable_symbol(rng: np.random.Generator, kappas, N: int = 48,
                               contraction: float = 0.5) -> MatrixSymbol:
    """Theta diag(zeta^kappa) conj(Theta)^{-1} for a random Theta = Theta0 (I + K zeta).

    Theta0 is well conditioned and ||K|| <= ``contraction`` < 1, so Theta is
    holomorphic and invertible on the closed disc.
    """
    kappas = np.asarray(kappas, dtype=int)
    m = len(kappas)
    Z = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    U, _, Vh = np.linalg.svd(Z)
    theta0 = U @ np.diag(rng.uniform(0.5, 2.0, m)) @ Vh
    K = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    K *= contraction * rng.uniform(0.2, 1.0) / np.linalg.norm(K, 2)

    def G(z):
        theta = theta0 @ (np.eye(m) + K * z)
        return theta @ np.diag(z ** kappas) @ np.linalg.inv(theta.conj())

    return MatrixSymbol.from_function(G, N)
