"""Holomorphic polygons with Lagrangian boundary: discrete Dirichlet minimization,
boundary Lagrangian loops and their partial Maslov indices."""

from .birkhoff import (ExistenceVerdict, MatrixSymbol, PartialIndexResult, existence_verdict,
                       griffiths_verdict, partial_indices, symbol_from_loop, virtual_dimension)
from .energy import EnergyReport, area, dirichlet_energy, energy_gradient, energy_report
from .fields import MapField
from .kahler import KahlerModel, LagrangianChart, flat, projective
from .loop import GrassmannianLoop, LagrangianPlane, assemble_loop, maslov_index
from .mesh import DiscMesh, build_mesh, refine
from .pipeline import RunRecord, run, sweep
from .scenario import Scenario
from .solver import minimize

__version__ = "0.1.0"
