"""Clearing vectors for interbank networks and their sensitivity to
estimation errors in the relative liabilities matrix.

The package computes the clearing payment vector of a financial network,
its directional derivatives with respect to admissible perturbations of
the relative liabilities, exact finite-step expansions, worst-case error
directions (with complete-network bounds), and the distribution of errors
under uniform-ball or Gaussian perturbation coefficients.
"""

from .clearing import ClearingSolution, clear, network_multiplier
from .errors import (
    BoundaryBankError,
    ClearnetError,
    InadmissiblePerturbationError,
    NetworkFileError,
    NonRegularSystemError,
    NumericsError,
    ValidationFailure,
)
from .extremal import (
    ExtremalReport,
    deviation_bounds,
    society_bounds,
    worst_case_deviation,
    worst_society_shortfall,
)
from .model import (
    BalanceSheetMapping,
    FinancialSystem,
    ValidationIssue,
    ValidationReport,
    complete_support,
    from_balance_sheet,
    is_regular,
    load_balance_sheet,
    load_system,
    save_system,
    system_from_document,
    system_to_document,
    validate,
)
from .perturb import (
    PerturbationBasis,
    constraint_matrix,
    h_star,
    h_star_star,
    is_admissible,
    orthonormal_basis,
    perturbed_system,
    support_pattern,
)
from .sensitivity import (
    SensitivityOperator,
    basis_jacobian,
    directional_derivative,
    kth_derivative,
    propagation_operator,
    taylor_clearing,
)
from .stochastic import (
    ConfidenceBands,
    DistributionReport,
    confidence_bands,
    deviation_distribution,
    deviation_tail_cdf,
    gaussian_mgf,
    make_rng,
    sample_coefficients,
    society_distribution,
    society_gaussian_cdf,
    society_uniform_cdf,
)

__all__ = [
    "BalanceSheetMapping",
    "BoundaryBankError",
    "ClearingSolution",
    "ClearnetError",
    "ConfidenceBands",
    "DistributionReport",
    "ExtremalReport",
    "FinancialSystem",
    "InadmissiblePerturbationError",
    "NetworkFileError",
    "NonRegularSystemError",
    "NumericsError",
    "PerturbationBasis",
    "SensitivityOperator",
    "ValidationFailure",
    "ValidationIssue",
    "ValidationReport",
    "basis_jacobian",
    "clear",
    "complete_support",
    "confidence_bands",
    "constraint_matrix",
    "deviation_bounds",
    "deviation_distribution",
    "deviation_tail_cdf",
    "directional_derivative",
    "from_balance_sheet",
    "gaussian_mgf",
    "h_star",
    "h_star_star",
    "is_admissible",
    "is_regular",
    "kth_derivative",
    "load_balance_sheet",
    "load_system",
    "make_rng",
    "network_multiplier",
    "orthonormal_basis",
    "perturbed_system",
    "propagation_operator",
    "sample_coefficients",
    "save_system",
    "society_bounds",
    "society_distribution",
    "society_gaussian_cdf",
    "society_uniform_cdf",
    "support_pattern",
    "system_from_document",
    "system_to_document",
    "taylor_clearing",
    "validate",
    "worst_case_deviation",
    "worst_society_shortfall",
]

__version__ = "0.1.0"
