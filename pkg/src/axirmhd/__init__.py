"""Finite-volume solvers for 2D axisymmetric radiative MHD on stretched
spherical grids, built around a per-cell coefficient cluster that drives
explicit through fully implicit solution procedures, plus a
frequency-resolved Comptonizing radiative-transfer solver."""

from .constants import NEQ, VAR_NAMES
from .grid import Grid, build_grid, metrics
from .state import (BoundarySpec, FieldSet, ScalingSet, apply_boundary,
                    from_primitives, nondim, primitives, redim)

__version__ = "0.1.0"
