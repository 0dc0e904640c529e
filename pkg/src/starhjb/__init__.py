"""Fully nonlinear HJB systems on a star network with a Kirchhoff vertex condition."""
from .config import ConfigError, ProblemConfig, parse_config, serialize_config
from .errors import (
    ConsistencyError, ConvergenceError, DomainError, NoRootError, PreconditionError,
    StarHJBError,
)
from .expr import ExprSyntaxError, parse_expr
from .hamiltonian import (
    Advection, CustomHamiltonian, Eikonal, HamiltonianSet, KirchhoffCondition, Viscous,
    check_all, linear_kirchhoff, make_hamiltonian,
)
from .network import NetworkPoint, RayFunction, StarNetwork, geodesic_distance
from .solver import DiscreteSolution, Grid, Problem, SolverConfig, solve
from .testfn import (
    BarrierPair, TestFunctionBundle, build_barriers, build_sub_test_function,
    build_super_test_function, grad_at_vertex,
)

__version__ = "0.1.0"

__all__ = [
    "Advection", "BarrierPair", "ConfigError", "ConsistencyError", "ConvergenceError",
    "CustomHamiltonian", "DiscreteSolution", "DomainError", "Eikonal", "ExprSyntaxError", "Grid",
    "HamiltonianSet", "KirchhoffCondition", "NetworkPoint", "NoRootError", "PreconditionError",
    "Problem", "ProblemConfig", "RayFunction", "SolverConfig", "StarHJBError", "StarNetwork",
    "TestFunctionBundle", "Viscous", "build_barriers", "build_sub_test_function",
    "build_super_test_function", "check_all", "geodesic_distance", "grad_at_vertex",
    "linear_kirchhoff", "make_hamiltonian", "parse_config", "parse_expr", "serialize_config",
    "solve",
]
