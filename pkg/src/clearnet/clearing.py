"""Clearing payments via the fictitious default algorithm.

Payments solve the fixed point ``p = p_bar min (x + Pi^T p)``: each bank
pays the smaller of what it owes and what it has. Starting from everyone
solvent, banks whose incoming value falls strictly below their obligations
are marked as defaulting and the payments of the default set are re-solved,
until the set stabilizes. For a regular system the fixed point is unique
and the default set grows monotonically, so at most ``n`` rounds occur.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryBankError, NonRegularSystemError, NumericsError
from .model import FinancialSystem, is_regular

# Brink-of-default detection: the theory excludes the measure-zero set where
# some bank's incoming value equals its obligations exactly, so we must
# detect it numerically rather than silently pick a side.
BOUNDARY_TOL = 1e-9

# Fixed-point residual guarantee, relative to max(1, ||p_bar||_inf).
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ClearingSolution:
    """Clearing payments with the default indicator that produced them.

    ``defaults[i]`` is 1 iff bank i's incoming value is strictly below its
    total obligations. ``iterations`` counts the default-set updates (linear
    solves) performed; 0 means no bank ever defaulted.
    """

    payments: np.ndarray
    defaults: np.ndarray
    society_payout: float | None = None
    iterations: int = 0

    def __post_init__(self):
        payments = np.asarray(self.payments, dtype=float).copy()
        defaults = np.asarray(self.defaults, dtype=np.int8).copy()
        payments.setflags(write=False)
        defaults.setflags(write=False)
        object.__setattr__(self, "payments", payments)
        object.__setattr__(self, "defaults", defaults)

    @property
    def default_set(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.defaults))


def clear(system: FinancialSystem) -> ClearingSolution:
    """Compute the unique clearing vector of a regular system.

    Raises
    ------
    NonRegularSystemError
        If some risk orbit has zero external assets (witness attached).
    BoundaryBankError
        If any bank ends up within ``BOUNDARY_TOL * max(1, p_bar_i)`` of
        exact default, where the default indicator is ill-defined.
    """
    regular, witness = is_regular(system)
    if not regular:
        raise NonRegularSystemError(witness)

    pi = system.relative_liabilities
    p_bar = system.total_obligations
    x = system.external_assets
    n = system.n

    payments = p_bar.copy()
    defaults = np.zeros(n, dtype=bool)
    identity = np.eye(n)
    iterations = 0
    for _ in range(n + 1):
        value = x + pi.T @ payments
        new_defaults = defaults | (value < p_bar)
        if (new_defaults == defaults).all():
            break
        defaults = new_defaults
        iterations += 1
        matrix = identity - defaults[:, None] * pi.T
        rhs = np.where(defaults, x, p_bar)
        try:
            payments = np.linalg.solve(matrix, rhs)
        except np.linalg.LinAlgError as exc:  # unreachable for regular systems
            raise NumericsError(f"default-set solve failed: {exc}") from exc
    else:
        raise NumericsError("fictitious default did not stabilize")

    margin = np.abs(x + pi.T @ payments - p_bar)
    boundary = margin <= BOUNDARY_TOL * np.maximum(1.0, p_bar)
    if boundary.any():
        raise BoundaryBankError(np.flatnonzero(boundary))

    payout = None
    if system.has_society:
        payout = float(system.society_weights @ payments)
    return ClearingSolution(
        payments=payments,
        defaults=defaults.astype(np.int8),
        society_payout=payout,
        iterations=iterations,
    )


def network_multiplier(system: FinancialSystem, solution: ClearingSolution) -> np.ndarray:
    """Dense inverse of ``I - diag(d) Pi^T``.

    This matrix propagates a marginal payment shock through the defaulting
    banks. Its Neumann series has nonnegative terms, so the multiplier is
    entrywise nonnegative; invertibility holds because the spectral radius
    of ``diag(d) Pi^T`` is below one on regular systems, which is asserted.
    """
    pi = system.relative_liabilities
    contraction = solution.defaults[:, None] * pi.T
    radius = float(np.max(np.abs(np.linalg.eigvals(contraction))))
    if not radius < 1.0:
        raise NumericsError(
            f"spectral radius {radius} of the default contraction is not below 1"
        )
    try:
        return np.linalg.inv(np.eye(system.n) - contraction)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"network multiplier is singular: {exc}") from exc


def _clear_batch(pi_stack: np.ndarray, x: np.ndarray, p_bar: np.ndarray):
    """Fictitious default run in lockstep over a stack of fraction matrices.

    Used by Monte Carlo routines that re-clear the same (x, p_bar) under
    many perturbed matrices. No regularity or boundary checks: samples sit
    off the measure-zero boundary almost surely and share the base system's
    regularity for admissible step sizes.
    """
    m, n, _ = pi_stack.shape
    pi_t = np.transpose(pi_stack, (0, 2, 1))
    payments = np.broadcast_to(p_bar, (m, n)).copy()
    defaults = np.zeros((m, n), dtype=bool)
    identity = np.eye(n)
    for _ in range(n + 1):
        value = x + np.einsum("sij,si->sj", pi_stack, payments)
        new_defaults = defaults | (value < p_bar)
        if (new_defaults == defaults).all():
            break
        defaults = new_defaults
        matrix = identity - defaults[:, :, None] * pi_t
        rhs = np.where(defaults, x, p_bar)
        payments = np.linalg.solve(matrix, rhs[:, :, None])[:, :, 0]
    return payments, defaults
