"""Geodesic connectedness and completeness tools for Gödel-type spacetimes."""

from .connect import GeodesicSolution, SolverConfig, minimize_action
from .errors import DegenerateL, ExprDomainError, ExprSyntaxError, LorentzViolation
from .exprfield import Expr, parse_expression
from .hypotheses import GrowthWitness, HypothesisReport, Region, theorem_verdicts
from .pathspace import BoundaryData, DiscretePath
from .shoot import InitialData, Trajectory, completeness_probe, integrate_geodesic
from .spacetime import SpacetimeSpec, instantiate_builtin, minkowski_like

__all__ = [
    "BoundaryData",
    "DegenerateL",
    "DiscretePath",
    "Expr",
    "ExprDomainError",
    "ExprSyntaxError",
    "GeodesicSolution",
    "GrowthWitness",
    "HypothesisReport",
    "InitialData",
    "LorentzViolation",
    "Region",
    "SolverConfig",
    "SpacetimeSpec",
    "Trajectory",
    "completeness_probe",
    "instantiate_builtin",
    "integrate_geodesic",
    "minimize_action",
    "minkowski_like",
    "parse_expression",
    "theorem_verdicts",
]
