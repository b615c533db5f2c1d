"""Canonical duality tools for anti-plane shear of nonlinear elastic solids.

The main entry points:

* :mod:`antiplane.materials` for the QuadExp and power-law energies and their
  Legendre conjugates;
* :mod:`antiplane.fields` for grids, fields and the statically admissible stress;
* :mod:`antiplane.dual_solver` for the pointwise dual algebraic equation;
* :mod:`antiplane.triality` for energies, the gap function and root labels;
* :mod:`antiplane.reconstruction` for the displacement from a dual root;
* :mod:`antiplane.oracle` for direct minimization used as an independent check;
* :mod:`antiplane.tensor3d` for the 3-D Saint-Venant-Kirchhoff dual equation;
* :mod:`antiplane.cli` for the ``antiplane`` command.
"""

from __future__ import annotations

from .dual_solver import DualRootSet, Root, solve_dual, solve_field
from .errors import AntiplaneError
from .fields import Grid2, ScalarField2, VectorField2, admissible_stress
from .materials import PowerLaw, QuadExp
from .reconstruction import reconstruct
from .tensor3d import LameParams, solve_tensor_dual
from .triality import classify, energy_report

__version__ = "0.1.0"

__all__ = [
    "AntiplaneError",
    "DualRootSet",
    "Grid2",
    "LameParams",
    "PowerLaw",
    "QuadExp",
    "Root",
    "ScalarField2",
    "VectorField2",
    "admissible_stress",
    "classify",
    "energy_report",
    "reconstruct",
    "solve_dual",
    "solve_field",
    "solve_tensor_dual",
]
