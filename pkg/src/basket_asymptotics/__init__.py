"""Density asymptotics of Black-Scholes baskets near expiry and in small noise."""
from .bvp import EnergySolution, MinimizerCandidate, solve_bvp, symmetric_closed_form
from .errors import (
    AccuracyError,
    BracketError,
    ConvergenceError,
    DefinitenessError,
    DomainError,
    PreconditionError,
    StiffnessError,
)
from .expansion import ExpansionResult, SecondOrderODE, lambda_prime, short_time_density, small_noise_density, xhat_solve
from .focality import FocalityReport, critical_strike, focality_matrix
from .geometry import FocalPoint, focal_points, strike_surface, weingarten
from .hamiltonian import HamiltonianSystem, PhaseState, flow, hamiltonian_value, inverse_flow
from .model import BasketSpec, asian_to_basket, from_chart, to_chart
from .oracle import DensityCurve, convolution_density, laplace_density, mc_density

__version__ = "0.1.0"
