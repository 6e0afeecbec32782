"""Modal (Fourier-in-theta) Navier-Stokes solver in cylindrical coordinates."""
from .fields import ModalScalarField, ModalVectorField, NormReport, ParityClass
from .grid import AxisParity, MeridianGrid, make_grid
from .solvers import (DataFamily, FlowState, ProfileHierarchy, Scheme, SolverConfig,
                      run_axisym, run_full, run_hierarchy)

__version__ = "0.1.0"

__all__ = [
    "AxisParity", "DataFamily", "FlowState", "MeridianGrid", "ModalScalarField",
    "ModalVectorField", "NormReport", "ParityClass", "ProfileHierarchy", "Scheme",
    "SolverConfig", "make_grid", "run_axisym", "run_full", "run_hierarchy",
]
