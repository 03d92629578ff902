"""Shared fixtures and generators for the test suite.

The four-bank network is the standing worked example: its clearing vector,
worst-case direction and finite-step behaviour are known, so tests freeze
those values here. Random regular systems are drawn with seeded generators
only; every expected value is either a frozen known quantity or computed
by an independent oracle inside the test.
"""

from __future__ import annotations

import numpy as np

from clearnet import (
    FinancialSystem,
    clear,
    orthonormal_basis,
)

# Four-bank fixture: nominal liabilities, external assets, and its known
# clearing outcome (payments, default set).
FOUR_BANK_L = np.array(
    [
        [0.0, 7.0, 1.0, 1.0],
        [3.0, 0.0, 3.0, 3.0],
        [1.0, 1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0, 0.0],
    ]
)
FOUR_BANK_X = np.array([0.0, 2.0, 2.0, 2.0])
FOUR_BANK_P = np.array([4.5, 7.5, 3.0, 3.0])
FOUR_BANK_DEFAULTS = np.array([1, 1, 0, 0])
FOUR_BANK_PBAR = np.array([9.0, 9.0, 3.0, 3.0])

# Known worst-case direction for the four-bank fixture (entries rounded to
# four decimals), the step at which its support collapses, and the
# resulting clearing vector.
FOUR_BANK_WORST_DELTA = np.array(
    [
        [0.0, 0.3230, -0.1615, -0.1615],
        [-0.0381, 0.0, 0.0190, 0.0190],
        [0.0571, -0.4845, 0.0, 0.4274],
        [0.0571, -0.4845, 0.4274, 0.0],
    ]
)
FOUR_BANK_WORST_STEP = 0.688
FOUR_BANK_PERTURBED_L = np.array(
    [
        [0.0, 9.0, 0.0, 0.0],
        [2.76, 0.0, 3.12, 3.12],
        [1.12, 0.0, 0.0, 1.88],
        [1.12, 0.0, 1.88, 0.0],
    ]
)
FOUR_BANK_PERTURBED_P = np.array([4.11, 6.11, 3.0, 3.0])

# Known worst-case society direction of the worked society example
# (entries rounded to two decimals); only its structure is testable since
# the society liabilities behind it are not published.
SOCIETY_WORST_DELTA = np.array(
    [
        [0.0, 0.16, -0.46, 0.30],
        [0.11, 0.0, 0.16, -0.27],
        [0.06, 0.04, 0.0, -0.10],
        [-0.26, -0.34, 0.60, 0.0],
    ]
)


def four_bank_system() -> FinancialSystem:
    return FinancialSystem.from_liabilities(FOUR_BANK_L, FOUR_BANK_X)


def four_bank_society_system() -> FinancialSystem:
    """Four-bank interbank block with synthetic unit society liabilities."""
    return FinancialSystem.from_liabilities(
        FOUR_BANK_L, FOUR_BANK_X, society_liabilities=np.ones(4)
    )


def align_sign(candidate: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Return ``candidate`` or its negation, whichever is closer to the reference."""
    if np.abs(candidate - reference).max() <= np.abs(candidate + reference).max():
        return candidate
    return -candidate


def random_regular_system(
    rng: np.random.Generator,
    n: int | None = None,
    density: float = 0.6,
    society: bool = False,
    want_defaults: bool = True,
    want_directions: bool = True,
    max_tries: int = 200,
):
    """Draw a regular, boundary-free system (with its clearing solution).

    ``want_defaults`` insists on a default set that is neither empty nor
    everything; ``want_directions`` insists the fixed-support perturbation
    space is nontrivial.
    """
    for _ in range(max_tries):
        size = int(n if n is not None else rng.integers(3, 11))
        mask = rng.random((size, size)) < density
        np.fill_diagonal(mask, False)
        liabilities = mask * rng.uniform(0.5, 2.0, (size, size))
        x = rng.uniform(0.0, 2.0, size) * (rng.random(size) < 0.7)
        l0 = rng.uniform(0.2, 1.0, size) if society else None
        try:
            system = FinancialSystem.from_liabilities(
                liabilities, x, society_liabilities=l0
            )
        except Exception:
            continue
        try:
            solution = clear(system)
        except Exception:
            continue
        n_defaults = int(solution.defaults.sum())
        if want_defaults and (n_defaults == 0 or n_defaults == size):
            continue
        if want_directions:
            basis = orthonormal_basis(
                system.relative_liabilities, system.total_obligations, "fixed"
            )
            if basis.dimension == 0:
                continue
        return system, solution
    raise RuntimeError("could not draw a usable random system")


def random_unit_direction(basis, rng: np.random.Generator) -> np.ndarray:
    """Admissible perturbation with unit Frobenius norm from random coefficients."""
    z = rng.standard_normal(basis.dimension)
    z /= np.linalg.norm(z)
    return basis.combine(z)


def fit_loglog_slope(h_values, residuals) -> float:
    """Least-squares slope of log(residual) against log(h)."""
    logs_h = np.log(np.asarray(h_values, dtype=float))
    logs_r = np.log(np.asarray(residuals, dtype=float))
    slope, _ = np.polyfit(logs_h, logs_r, 1)
    return float(slope)
