"""Dense cone-programming layer: problem container, NT interior-point
solver, and an independent feasibility verifier.

The solver behind `solve` is pluggable: register alternatives under a
name and route callers through `get_solver` so the optimization drivers
never bind to a particular implementation.
"""

from .cones import (NonnegCone, PsdCone, SocCone, cone_degree, cone_dim,
                    cone_margin, smat, svec)
from .problem import (ConicProblem, ConicSolution, VarTable,
                      realify_hermitian)
from .solver import solve
from .verify import ConeViolation, VerifyReport, verify

_SOLVERS = {"builtin": solve}


def register_solver(name: str, fn):
    _SOLVERS[name] = fn


def get_solver(name: str = "builtin"):
    return _SOLVERS[name]


__all__ = [
    "NonnegCone", "SocCone", "PsdCone", "cone_dim", "cone_degree",
    "cone_margin", "svec", "smat", "ConicProblem", "ConicSolution",
    "VarTable", "realify_hermitian", "solve", "verify", "VerifyReport",
    "ConeViolation", "register_solver", "get_solver",
]
