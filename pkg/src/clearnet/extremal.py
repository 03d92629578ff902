"""Worst-case error directions and their complete-network bounds.

Over unit-Frobenius admissible directions, the squared first-order shift of
the clearing vector is a quadratic form in the basis coordinates, so its
maximum is the top Gram eigenvalue and the maximizer is recovered from the
top eigenvector (both signs attain it). The payout to society is linear in
the coordinates, so its worst shortfall is a norm with a unique minimizer.
Fixing only the obligation totals and not the link pattern widens the
admissible set; the complete-support basis then yields an upper bound for
the deviation and a lower bound for the society shortfall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clearing import clear
from .errors import NumericsError
from .model import FinancialSystem
from .perturb import PerturbationBasis, orthonormal_basis
from .sensitivity import basis_jacobian, jacobian_spectrum

# Two top eigenvalues closer than this (relatively) are reported as a tie.
_DEGENERACY_RTOL = 1e-9

NORMALIZATIONS = ("none", "clearing", "liabilities")


@dataclass(frozen=True, eq=False)
class ExtremalReport:
    """Extremal objective with the direction that attains it.

    ``objective`` is the squared worst-case deviation, or the (nonpositive)
    worst society shortfall. The optimizer has unit Frobenius norm; for the
    deviation case both signs are optimal (``sign_ambiguous``), and a tied
    top eigenvalue is flagged as ``degenerate`` rather than resolved
    silently. ``bounds`` carries the (fixed-support, complete-support) pair
    when requested.
    """

    objective: float
    relative_objective: float
    optimizer: np.ndarray | None
    sign_ambiguous: bool = False
    degenerate: bool = False
    bounds: tuple[float, float] | None = None
    normalization: str = "none"


def _normalization_scale(kind, solution, system) -> np.ndarray | None:
    """Diagonal of the normalization matrix, or None for the identity."""
    if isinstance(kind, np.ndarray):
        return None  # full matrix handled by the caller
    if kind == "none":
        return None
    if kind == "clearing":
        payments = solution.payments
        if np.any(payments == 0):
            raise NumericsError("zero clearing payments make this normalization singular")
        return 1.0 / payments
    if kind == "liabilities":
        p_bar = system.total_obligations
        if np.any(p_bar == 0):
            raise NumericsError("zero obligations make this normalization singular")
        return 1.0 / p_bar
    raise ValueError(f"unknown normalization {kind!r}")


def _scaled_jacobian(jacobian, kind, solution, system) -> np.ndarray:
    if isinstance(kind, np.ndarray):
        if kind.shape != (system.n, system.n):
            raise ValueError("normalization matrix must be n-by-n")
        return kind @ jacobian
    scale = _normalization_scale(kind, solution, system)
    return jacobian if scale is None else scale[:, None] * jacobian


def _normalization_label(kind) -> str:
    return "custom" if isinstance(kind, np.ndarray) else str(kind)


def worst_case_deviation(
    system: FinancialSystem, basis: PerturbationBasis, normalization="none"
) -> ExtremalReport:
    """Largest squared first-order deviation over unit admissible directions.

    The objective is the top eigenvalue of the (optionally normalized) Gram
    matrix; the optimizer recombines the top eigenvector through the basis,
    oriented so its largest-magnitude entry is positive. An empty basis
    yields objective zero with no optimizer. ``relative_objective`` divides
    by the squared norm of the clearing vector.
    """
    solution = clear(system)
    _normalization_scale(normalization, solution, system)  # fail fast if singular
    operator = basis_jacobian(system, solution, basis)
    norm_sq = float(solution.payments @ solution.payments)

    if operator.dimension == 0:
        return ExtremalReport(
            objective=0.0,
            relative_objective=0.0,
            optimizer=None,
            sign_ambiguous=True,
            normalization=_normalization_label(normalization),
        )

    plain = isinstance(normalization, str) and normalization == "none"
    if plain:
        values, vectors = operator.eigenvalues, operator.eigenvectors
    else:
        scaled = _scaled_jacobian(operator.jacobian, normalization, solution, system)
        values, vectors = jacobian_spectrum(scaled)

    objective = float(values[0])
    degenerate = bool(
        values.size > 1
        and (values[0] - values[1]) <= _DEGENERACY_RTOL * max(values[0], np.finfo(float).tiny)
    )
    optimizer = None
    if vectors.shape[1] > 0:
        optimizer = basis.combine(vectors[:, 0])
        peak = np.abs(optimizer).argmax()
        if optimizer.flat[peak] < 0:
            optimizer = -optimizer
    return ExtremalReport(
        objective=objective,
        relative_objective=objective / norm_sq if norm_sq > 0 else 0.0,
        optimizer=optimizer,
        sign_ambiguous=True,
        degenerate=degenerate,
        normalization=_normalization_label(normalization),
    )


def deviation_bounds(system: FinancialSystem, normalization="none") -> tuple[float, float]:
    """(fixed-support, complete-support) worst squared deviations.

    The first entry keeps the link pattern fixed; the second allows any
    rewiring consistent with the obligation totals and therefore bounds
    every admissible error from above. They coincide when the network is
    already complete.
    """
    pi = system.relative_liabilities
    p_bar = system.total_obligations
    lower = worst_case_deviation(
        system, orthonormal_basis(pi, p_bar, "fixed"), normalization
    )
    upper = worst_case_deviation(
        system, orthonormal_basis(pi, p_bar, "complete"), normalization
    )
    return lower.objective, upper.objective


def worst_society_shortfall(
    system: FinancialSystem, basis: PerturbationBasis
) -> ExtremalReport:
    """Most negative first-order change of the payout to society.

    Unlike the deviation case the optimizer is unique: flipping its sign
    produces the largest payout increase instead. If no bank defaults or
    every bank defaults, the payout is first-order immune to admissible
    errors and the objective is zero. ``relative_objective`` divides by the
    base payout to society.
    """
    if not system.has_society:
        raise ValueError("system has no society node")
    solution = clear(system)
    payout = solution.society_payout
    n_defaults = int(solution.defaults.sum())

    def trivial():
        return ExtremalReport(
            objective=0.0,
            relative_objective=0.0,
            optimizer=None,
        )

    if n_defaults == 0 or n_defaults == system.n or basis.dimension == 0:
        return trivial()
    operator = basis_jacobian(system, solution, basis)
    gradient = operator.jacobian.T @ system.society_weights
    norm = float(np.linalg.norm(gradient))
    if norm == 0.0:
        return trivial()
    return ExtremalReport(
        objective=-norm,
        relative_objective=-norm / payout if payout > 0 else 0.0,
        optimizer=basis.combine(-gradient / norm),
    )


def society_bounds(system: FinancialSystem) -> tuple[float, float]:
    """(complete-support, fixed-support) bounds on the society shortfall.

    Both are nonpositive; the complete-support value is the more negative
    one and bounds every admissible rewiring error from below.
    """
    pi = system.relative_liabilities
    p_bar = system.total_obligations
    lower = worst_society_shortfall(system, orthonormal_basis(pi, p_bar, "complete"))
    upper = worst_society_shortfall(system, orthonormal_basis(pi, p_bar, "fixed"))
    return lower.objective, upper.objective
