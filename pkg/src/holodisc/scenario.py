"""Scenario files: the model, Lagrangians, corner points, initializer and settings of one run.

A scenario is JSON. Complex numbers are written as a number, a string such
as ``"0.5-1j"``, or a ``[re, im]`` pair; points are lists of such
coordinates and matrices are lists of rows. Example::

    {
      "model": {"kind": "projective", "m": 1},
      "lagrangians": [{"kind": "real_projective"},
                      {"kind": "real_projective", "rotation": 1.5707963267948966}],
      "intersections": {"x": [[1, 1]], "y": [1, -1]},
      "initializer": {"kind": "geodesic", "params": {"via": [[1, 0], [1, [0, 1]]]}},
      "mesh": {"n": 2, "h": 0.2, "grading": 2, "levels": [0, 1, 2]},
      "optimizer": {"max_iter": 2000, "tol": 1e-6},
      "indices": {"samples_per_arc": 512}
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kahler
from .errors import DomainError, NonTransverseError, ScenarioError

INITIALIZER_KINDS = ("constant", "geodesic", "lune", "harmonic", "nodal")


@dataclass(frozen=True)
class OptimizerSettings:
    max_iter: int = 2000
    tol: float = 1e-6
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    method: str = "cg"

    def __post_init__(self):
        if self.method not in ("cg", "gd"):
            raise ScenarioError(f"optimizer method must be 'cg' or 'gd', got {self.method!r}")


@dataclass(frozen=True)
class MeshSettings:
    n: int
    h: float = 0.2
    grading: float = 2.0
    levels: tuple = (0,)

    def h_at(self, level: int) -> float:
        return self.h / 2**level


@dataclass(frozen=True)
class IndexSettings:
    N: int | None = None
    samples_per_arc: int = 512


@dataclass(frozen=True, eq=False)
class Scenario:
    model: kahler.KahlerModel
    lagrangians: tuple
    x: tuple                      # x_1 .. x_{n-1}
    y: np.ndarray
    initializer: dict
    optimizer: OptimizerSettings
    mesh: MeshSettings
    indices: IndexSettings = field(default_factory=IndexSettings)
    name: str = ""
    base_dir: Path | None = None
    digest: str = ""

    @property
    def n(self) -> int:
        return len(self.lagrangians)

    def corner_points(self) -> list:
        """Prescribed images of the marked nodes: y at 1, then x_1 .. x_{n-1}."""
        return [self.y] + list(self.x)

    def validate(self):
        """Check x_k in L_k and L_{k+1}, y in L_n and L_1, each a transversal intersection."""
        n = self.n
        if n < 2:
            raise ScenarioError("a scenario needs at least two Lagrangians")
        if len(self.x) != n - 1:
            raise ScenarioError(f"expected {n - 1} intersection points x_k, got {len(self.x)}")
        if self.mesh.n != n:
            raise ScenarioError(f"mesh.n = {self.mesh.n} but there are {n} Lagrangians")
        checks = [(f"x_{k}", self.x[k - 1], k, k + 1) for k in range(1, n)]
        checks.append(("y", self.y, n, 1))
        for name, p, a, b in checks:
            La, Lb = self.lagrangians[a - 1], self.lagrangians[b - 1]
            for lab, L in ((a, La), (b, Lb)):
                if not kahler.membership(L, p, 1e-8):
                    raise ScenarioError(f"{name} is not on L_{lab} (distance "
                                        f"{kahler.distance_to(L, p):.3g}); it must lie in L_{a} and L_{b}")
            try:
                hits = kahler.transversal_intersections(La, Lb)
            except NonTransverseError as exc:
                raise ScenarioError(f"{name}: L_{a} and L_{b} do not meet in isolated points ({exc})") from exc
            match = [t for q, t in hits if kahler.points_equal(self.model, q, p, 1e-7)]
            if not match:
                raise ScenarioError(f"{name} is not an intersection point of L_{a} and L_{b}")
            if not match[0]:
                raise ScenarioError(f"{name}: L_{a} and L_{b} are not transverse there")
        return self


# ---------------------------------------------------------------------------
# parsing


def parse_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ScenarioError(f"complex number as a list must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError as exc:
            raise ScenarioError(f"cannot parse complex number {v!r}") from exc
    if isinstance(v, (int, float)):
        return complex(v)
    raise ScenarioError(f"cannot parse complex number {v!r}")


def parse_point(v, model: kahler.KahlerModel) -> np.ndarray:
    if not isinstance(v, (list, tuple)):
        v = [v]
    p = np.array([parse_complex(c) for c in v], dtype=complex)
    try:
        return kahler.as_point(model, p)
    except DomainError as exc:
        raise ScenarioError(f"bad point {v!r}: {exc}") from exc


def parse_matrix(v) -> np.ndarray:
    return np.array([[parse_complex(c) for c in row] for row in v], dtype=complex)


def parse_lagrangian(spec: dict, model: kahler.KahlerModel, label: int) -> kahler.LagrangianChart:
    kind = spec.get("kind")
    try:
        if kind == "real_projective":
            if "unitary" in spec:
                U = parse_matrix(spec["unitary"])
            elif "rotation" in spec:
                U = kahler.real_axis_rotation(float(spec["rotation"]), model.m)
            else:
                U = None
            return kahler.real_projective(model, U, label=label)
        if kind == "linear_plane":
            phases = spec.get("phases")
            basis = parse_matrix(spec["basis"]) if "basis" in spec else None
            offset = None
            if "offset" in spec:
                offset = np.array([parse_complex(c) for c in spec["offset"]])
            return kahler.linear_plane(model, phases, basis, offset, label=label)
    except DomainError as exc:
        raise ScenarioError(f"L_{label}: {exc}") from exc
    raise ScenarioError(f"L_{label}: unknown Lagrangian kind {kind!r} "
                        "(expected 'real_projective' or 'linear_plane')")


def parse_model(spec: dict) -> kahler.KahlerModel:
    kind = spec.get("kind")
    m = int(spec.get("m", 1))
    if kind == "flat":
        return kahler.flat(m)
    if kind == "projective":
        return kahler.projective(m, float(spec.get("normalization", 4.0)))
    raise ScenarioError(f"unknown model kind {kind!r} (expected 'flat' or 'projective')")


def from_dict(data: dict, base_dir=None, name="") -> Scenario:
    try:
        model = parse_model(data["model"])
        lags = tuple(parse_lagrangian(s, model, k + 1) for k, s in enumerate(data["lagrangians"]))
        inter = data["intersections"]
        x = tuple(parse_point(p, model) for p in inter.get("x", []))
        y = parse_point(inter["y"], model)
        init = dict(data.get("initializer", {"kind": "geodesic"}))
        init.setdefault("params", {})
        if init.get("kind") not in INITIALIZER_KINDS:
            raise ScenarioError(f"unknown initializer {init.get('kind')!r}; expected one of {INITIALIZER_KINDS}")
        opt = OptimizerSettings(**data.get("optimizer", {}))
        ms = dict(data.get("mesh", {}))
        ms.setdefault("n", len(lags))
        mesh = MeshSettings(n=int(ms["n"]), h=float(ms.get("h", 0.2)),
                            grading=float(ms.get("grading", 2.0)),
                            levels=tuple(int(v) for v in ms.get("levels", [0])))
        idx = IndexSettings(**data.get("indices", {}))
    except KeyError as exc:
        raise ScenarioError(f"scenario is missing the key {exc}") from exc
    except TypeError as exc:
        raise ScenarioError(f"bad scenario settings: {exc}") from exc
    digest = hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]
    sc = Scenario(model, lags, x, y, init, opt, mesh, idx, name or data.get("name", ""),
                  None if base_dir is None else Path(base_dir), digest)
    return sc.validate()


def load(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(data, base_dir=path.parent, name=data.get("name", path.stem))
