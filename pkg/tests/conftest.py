import json
from pathlib import Path

import numpy as np
import pytest

from holodisc import kahler

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def lune_map(zeta):
    """Conformal map of the disc onto the quarter-turn lune between R and the unit circle.

    Sends 1 to -1 (y), -1 to 1 (x_1); upper arc onto the real segment, lower arc
    onto the upper unit half circle. Chart coordinate w in the affine chart
    [1 : w].
    """
    zeta = np.asarray(zeta, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        W = 1j * (1 - zeta) / (1 + zeta)
        W = W.real + 1j * np.maximum(W.imag, 0)
        Q = np.sqrt(W)
        w = (Q - 1) / (Q + 1)
    return np.where(np.abs(zeta + 1) < 1e-14, 1.0, w)


def lune_lagrangians(m=1):
    model = kahler.projective(m)
    return model, [kahler.real_projective(model, label=1),
                   kahler.real_projective(model, kahler.real_axis_rotation(np.pi / 2, m), label=2)]


def scenario_data(name):
    return json.loads((SCENARIOS / f"{name}.json").read_text())


def random_tangent(rng, model, p):
    v = rng.normal(size=p.shape) + 1j * rng.normal(size=p.shape)
    if model.is_projective:
        v = kahler.horizontal(p, v)
    return v


def random_point(rng, model):
    p = rng.normal(size=model.ambient_dim) + 1j * rng.normal(size=model.ambient_dim)
    return kahler.as_point(model, p)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    """Remember one acceptance line; printed in the terminal summary."""
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
