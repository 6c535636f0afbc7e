"""Non-overlapping Schwarz solvers for the 2-D linear Schrodinger equation
``(i d_t + Delta + V) u = 0`` on a rectangle split into vertical strips."""
from .errors import *  # noqa: F401,F403
from .mesh import DecompositionPlan, SubdomainFem, assemble_fem, build_plan
from .potential import PotentialExpr, parse_potential
from .transmission import TransmissionSpec, pade_coefficients
from .subdomain import SubdomainSolver, SubdomainState, read_snapshot, write_snapshot
from .runtime import Runtime, Topology
from .interface import (
    Decomposition,
    InterfaceLayout,
    InterfaceMatrix,
    Preconditioner,
    build_explicit,
    build_preconditioner,
    solve_interface,
    spectrum_small,
)

__version__ = "0.1.0"
