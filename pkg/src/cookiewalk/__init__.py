"""Multi-excited (cookie) random walks on regular trees.

Builds the cookie environment matrix, computes the spectral radii of its
irreducible classes, classifies the walk as recurrent or transient and runs
reproducible Monte Carlo for the walk and its branching structure.
"""

__version__ = "0.1.0"

from .env import (
    STANDARD, ZERO_Q, CookieEnvironment, GWEnvironment, gw_map, lambda_dig, lambda_once,
    lambda_sym, nu, stuck_closed_form, validate, xi_law,
)
from .pmatrix import CookieMatrix, irreducible_classes, p_entry, truncate
from .spectral import lambda_max, pf_radius_finite, radius_infinite_class, sym_defect
from .classify import monotonicity_probe, phase_boundary, verdict, verdict_gw

__all__ = [
    "STANDARD", "ZERO_Q", "CookieEnvironment", "GWEnvironment", "gw_map", "lambda_dig",
    "lambda_once", "lambda_sym", "nu", "stuck_closed_form", "validate", "xi_law",
    "CookieMatrix", "irreducible_classes", "p_entry", "truncate",
    "lambda_max", "pf_radius_finite", "radius_infinite_class", "sym_defect",
    "monotonicity_probe", "phase_boundary", "verdict", "verdict_gw",
]
