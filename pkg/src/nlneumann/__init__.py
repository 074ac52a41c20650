"""Fractional p-Laplacian with a nonlocal Neumann condition on an interval.

Piecewise-linear discretisation of ``(-Delta)^s_p`` on ``Omega = (a, b)`` with
a collar of exterior nodes, variational solvers for the eigenvalue, heat and
stationary problems, and pointwise checks of the nonlocal calculus
identities.
"""

from .errors import (ConfigError, DomainError, GeometryError, InputError, NlneumannError,
                     SolverError, UsageError)
from .geometry import DiscreteFunction, Mesh, Params, build_mesh, interpolate
from .quadrature import QuadTable, TailReport, build_quad_table, kernel, tail_report
from .forms import (DualVector, FormValue, dual_norm, form_gradient, gagliardo, j_p,
                    load_vector, mass_gradient)
from .solvers import DescentConfig, SolveStats, descend, prox_solve, prox_step, \
    root_find_monotone
from .pointops import (IdentityReport, PointEval, check_divergence_theorem,
                       check_integration_by_parts, eval_neumann, eval_plap, extend_neumann)
from .eigen import (EigenPair, eigen_residual, first_eigenpair, linf_equality_check,
                    next_eigenpair, rayleigh, sign_change_check)
from .evolution import EvolutionTrace, energy, heat_solve, mass, profile
from .stationary import (Compatibility, NonlinearitySpec, Sign, SignClass, SolveReport,
                         check_compatibility, check_growth_hypotheses, mountain_pass_solve,
                         nehari_project, solve_poisson)

__all__ = [
    "ConfigError", "DomainError", "GeometryError", "InputError", "NlneumannError",
    "SolverError", "UsageError",
    "DiscreteFunction", "Mesh", "Params", "build_mesh", "interpolate",
    "QuadTable", "TailReport", "build_quad_table", "kernel", "tail_report",
    "DualVector", "FormValue", "dual_norm", "form_gradient", "gagliardo", "j_p",
    "load_vector", "mass_gradient",
    "DescentConfig", "SolveStats", "descend", "prox_solve", "prox_step", "root_find_monotone",
    "IdentityReport", "PointEval", "check_divergence_theorem", "check_integration_by_parts",
    "eval_neumann", "eval_plap", "extend_neumann",
    "EigenPair", "eigen_residual", "first_eigenpair", "linf_equality_check", "next_eigenpair",
    "rayleigh", "sign_change_check",
    "EvolutionTrace", "energy", "heat_solve", "mass", "profile",
    "Compatibility", "NonlinearitySpec", "Sign", "SignClass", "SolveReport",
    "check_compatibility", "check_growth_hypotheses", "mountain_pass_solve", "nehari_project",
    "solve_poisson",
]
