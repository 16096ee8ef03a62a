"""End-to-end runs: load, minimize, build the boundary loop, compute indices, report.

Each run writes its artifacts into ``<out>/<name>-<digest>/level<L>/`` and
appends one JSON line to ``<out>/runs.jsonl``. The text report leaves out
timings and paths, so two runs of the same scenario and seed produce
byte-identical reports.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import birkhoff, loop as loops, scenario as scenarios, solver
from .birkhoff import ExistenceVerdict
from .energy import EnergyReport, conformality_defect
from .errors import ConsistencyError, HolodiscError, StageError
from .mesh import build_mesh

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2

# excluded radius around the marked points for the interior conformality column
INTERIOR_EXCLUSION = 0.1

HINTS = {
    "load": "check the scenario file against the documented keys and the intersection assignments",
    "mesh": "use 0 < h <= 1 and a grading exponent >= 1",
    "initialize": "pick another initializer or supply waypoints that stay on each Lagrangian",
    "minimize": "raise optimizer.max_iter or start from a closer initial map",
    "loop": "raise indices.samples_per_arc",
    "symbol": "raise indices.N or indices.samples_per_arc",
    "indices": "raise indices.N; an ambiguous rank usually means the symbol is under-resolved",
    "verdicts": "this is an internal inconsistency; please report the scenario",
    "report": "check that the output directory is writable",
}


@dataclass
class RunRecord:
    scenario_hash: str
    scenario_name: str
    level: int
    h: float
    seed: int
    threads: int
    energy: dict | None = None
    indices: dict | None = None
    verdicts: dict | None = None
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    status: str = "error"
    error: str | None = None

    @property
    def exit_code(self) -> int:
        return {"ok": EXIT_OK, "inconclusive": EXIT_INCONCLUSIVE}.get(self.status, EXIT_ERROR)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _num(x) -> str:
    return f"{float(x):.17g}"


def report_text(rec: RunRecord) -> str:
    lines = [
        f"scenario: {rec.scenario_name}",
        f"scenario_hash: {rec.scenario_hash}",
        f"level: {rec.level}",
        f"h: {_num(rec.h)}",
        f"seed: {rec.seed}",
        f"status: {rec.status}",
    ]
    if rec.energy is not None:
        for key in ("dirichlet", "area", "conformality_defect", "dbar_residual",
                    "perpendicularity_defect"):
            lines.append(f"{key}: {_num(rec.energy[key])}")
        lines.append(f"iterations: {rec.energy['iterations']}")
        lines.append(f"converged: {rec.energy['converged']}")
    if rec.indices is not None:
        r = rec.indices
        lines.append("kappas: " + " ".join(str(k) for k in r["kappas"]))
        lines.append(f"mu: {r['mu']}")
        lines.append("doubled_degrees: " + " ".join(str(k) for k in r["doubled_degrees"]))
        lines.append(f"virtual_dimension: {r['virtual_dimension']}")
    if rec.verdicts is not None:
        lines.append(f"existence_verdict: {rec.verdicts['existence']}")
        lines.append(f"griffiths_positive: {rec.verdicts['griffiths_positive']}")
        lines.append(f"note: {birkhoff.GRIFFITHS_NOTE}")
    if rec.error:
        lines.append(f"error: {rec.error}")
    return "\n".join(lines) + "\n"


class _Stages:
    """Runs named stages, timing each and wrapping failures in StageError."""

    def __init__(self, record: RunRecord):
        self.record = record

    def __call__(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except (HolodiscError, ValueError, ArithmeticError, OSError, KeyError) as exc:
            raise StageError(name, exc, HINTS.get(name, "")) from exc
        finally:
            self.record.timings[name] = self.record.timings.get(name, 0.0) + time.perf_counter() - t0


def run_scenario(sc: scenarios.Scenario, out_dir, level: int = 0, seed: int = 0, threads: int = 1,
                 initial=None, raise_errors: bool = False, extras: dict | None = None) -> RunRecord:
    """One full run of a parsed scenario at one mesh level.

    Errors are recorded in the returned RunRecord (status "error") unless
    ``raise_errors`` is set. ``extras`` (if a dict) receives the field, loop
    and symbol objects for callers that want more than the record.
    """
    out_dir = Path(out_dir)
    h = sc.mesh.h_at(level)
    rec = RunRecord(sc.digest, sc.name, level, h, seed, threads)
    stage = _Stages(rec)
    folder = out_dir / f"{sc.name or 'scenario'}-{sc.digest}" / f"level{level}"
    try:
        folder.mkdir(parents=True, exist_ok=True)
        lags = list(sc.lagrangians)
        mesh = stage("mesh", build_mesh, sc.mesh.n, h, sc.mesh.grading)
        u0 = initial if initial is not None else stage("initialize", solver.initialize, sc, mesh, seed)
        rows = []
        u, report = stage("minimize", solver.minimize, sc, mesh, u0, rows, seed, level)
        rec.energy = asdict(report)
        loop = stage("loop", loops.assemble_loop, u, lags, sc.indices.samples_per_arc)
        G = stage("symbol", birkhoff.symbol_from_loop, loop, sc.indices.N)
        result = stage("indices", birkhoff.partial_indices, G, sc.n)
        mu = stage("loop", loops.maslov_index, loop)
        stage("verdicts", _check_consistency, result, mu, sc.n)
        rec.indices = result.as_dict()
        rec.verdicts = {"existence": str(result.existence_verdict),
                        "griffiths_positive": result.griffiths_positive}
        rec.status = "inconclusive" if result.existence_verdict is ExistenceVerdict.INCONCLUSIVE else "ok"
        if extras is not None:
            extras.update(field=u, loop=loop, symbol=G, result=result,
                          conformality_interior=conformality_defect(u, INTERIOR_EXCLUSION))
        stage("report", _write_artifacts, rec, folder, mesh, u, rows, loop, G)
    except StageError as exc:
        rec.status = "error"
        rec.error = str(exc)
        if raise_errors:
            raise
    finally:
        if rec.status == "error" or "report" not in rec.artifacts:
            _write_report(rec, folder)
        _append_record(rec, out_dir)
    return rec


def _check_consistency(result, mu, n):
    if result.mu != sum(result.kappas):
        raise ConsistencyError(f"mu = {result.mu} but the partial indices sum to {sum(result.kappas)}")
    if result.mu != mu:
        raise ConsistencyError(f"partial indices sum to {result.mu} but the loop has Maslov index {mu}")
    if result.virtual_dimension != n - 3 + mu:
        raise ConsistencyError(f"virtual dimension {result.virtual_dimension} differs from n - 3 + mu")


def _write_artifacts(rec, folder, mesh, u, rows, loop, G):
    nodes, tris = mesh.to_csv(folder)
    rec.artifacts["mesh_nodes"] = str(nodes)
    rec.artifacts["mesh_triangles"] = str(tris)
    rec.artifacts["mapfield"] = str(u.to_csv(folder / "mapfield.csv"))
    rec.artifacts["trace"] = str(solver.write_trace_csv(rows, folder / "trace.csv"))
    rec.artifacts["loop"] = str(loop.to_csv(folder / "loop.csv"))
    rec.artifacts["symbol"] = str(G.to_csv(folder / "symbol.csv"))
    _write_report(rec, folder)


def _write_report(rec, folder):
    try:
        path = Path(folder) / "report.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report_text(rec), encoding="utf-8")
        rec.artifacts["report"] = str(path)
    except OSError:
        pass


def _append_record(rec, out_dir):
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "runs.jsonl", "a", encoding="utf-8") as f:
            f.write(rec.to_json() + "\n")
    except OSError:
        pass


def load(path) -> scenarios.Scenario:
    try:
        return scenarios.load(path)
    except (HolodiscError, OSError) as exc:
        raise StageError("load", exc, HINTS["load"]) from exc


def run(scenario_path, out_dir="holodisc-out", level: int | None = None, seed: int = 0,
        threads: int = 1) -> RunRecord:
    """Run a scenario file at one level (default: the first listed level)."""
    sc = load(scenario_path)
    if level is None:
        level = sc.mesh.levels[0] if sc.mesh.levels else 0
    return run_scenario(sc, out_dir, level, seed, threads)


CONVERGENCE_COLUMNS = ("level", "h", "status", "dirichlet", "area", "conformality_defect",
                       "conformality_interior", "dbar_residual", "perpendicularity_defect", "kappas")


def sweep(scenario_path, levels=None, out_dir="holodisc-out", seed: int = 0,
          threads: int = 1) -> list[RunRecord]:
    """One run per mesh level, each on a freshly built mesh; writes convergence.csv.

    A failing level is recorded and the sweep moves on. An empty level list
    runs nothing and writes nothing.
    """
    sc = load(scenario_path)
    levels = list(sc.mesh.levels if levels is None else levels)
    if not levels:
        return []
    records, rows = [], []
    for level in levels:
        extras = {}
        rec = run_scenario(sc, out_dir, level, seed, threads, extras=extras)
        records.append(rec)
        e = rec.energy or {}
        rows.append([level, _num(rec.h), rec.status]
                    + [_num(e[k]) if k in e else "" for k in CONVERGENCE_COLUMNS[3:6]]
                    + [_num(extras["conformality_interior"]) if "conformality_interior" in extras else ""]
                    + [_num(e[k]) if k in e else "" for k in CONVERGENCE_COLUMNS[7:9]]
                    + [" ".join(str(k) for k in rec.indices["kappas"]) if rec.indices else ""])
    path = Path(out_dir) / f"{sc.name or 'scenario'}-{sc.digest}" / "convergence.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(CONVERGENCE_COLUMNS)
        w.writerows(rows)
    for rec in records:
        rec.artifacts["convergence"] = str(path)
    return records


def sweep_exit_code(records) -> int:
    codes = [r.exit_code for r in records]
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    if EXIT_INCONCLUSIVE in codes:
        return EXIT_INCONCLUSIVE
    return EXIT_OK
