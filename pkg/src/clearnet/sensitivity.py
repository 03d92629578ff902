"""Directional derivatives of the clearing vector and its exact expansion.

Off the measure-zero set where some bank sits exactly at the brink of
default, the clearing vector is directionally differentiable in the
relative liabilities. With ``A = I - diag(d) Pi^T`` and a direction
``D``, the first derivative solves ``A y = diag(d) D^T p``; the k-th
derivative is ``k! M^k p`` for the propagation operator
``M = A^{-1} diag(d) D^T``; and for steps small enough that the default
set cannot change, the perturbed clearing vector is exactly the resolvent
``(I - h M)^{-1} p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .clearing import ClearingSolution
from .errors import NumericsError
from .model import FinancialSystem
from .perturb import PerturbationBasis, h_star

# Above this basis dimension the Gram spectrum is read off a thin SVD of
# the jacobian instead of a dense symmetric eigensolve, which would cost
# O(d^3); the spectra agree because gram = J^T J.
_DENSE_EIG_LIMIT = 1024


@dataclass(frozen=True, eq=False)
class SensitivityOperator:
    """Basis directional derivatives with their Gram spectrum.

    ``jacobian`` holds one column per basis matrix: the derivative of the
    clearing vector along it. ``eigenvalues`` are those of the Gram matrix
    ``jacobian^T jacobian`` in descending order (all nonnegative);
    ``eigenvectors`` holds matching orthonormal columns. When the spectrum
    was obtained from the thin SVD only the leading ``min(n, d)`` columns
    are stored; the remaining eigenvectors span the Gram null space.
    """

    jacobian: np.ndarray  # (n, d)
    eigenvalues: np.ndarray  # (d,)
    eigenvectors: np.ndarray  # (d, k), k <= d
    solution: ClearingSolution
    basis: PerturbationBasis

    @property
    def dimension(self) -> int:
        return self.jacobian.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        return self.jacobian.T @ self.jacobian

    @property
    def worst_squared_norm(self) -> float:
        """Squared spectral norm of the jacobian (largest Gram eigenvalue)."""
        return float(self.eigenvalues[0]) if self.dimension else 0.0


def _default_system_matrix(system: FinancialSystem, solution: ClearingSolution):
    pi = system.relative_liabilities
    return np.eye(system.n) - solution.defaults[:, None] * pi.T


def directional_derivative(
    system: FinancialSystem, solution: ClearingSolution, delta
) -> np.ndarray:
    """Derivative of the clearing vector along one perturbation direction.

    Equals the limit of ``(p(Pi + h D) - p(Pi)) / h``; solvent-only systems
    give the zero vector since ``diag(d)`` annihilates the right-hand side.
    The solution must come from :func:`clearnet.clearing.clear`, which
    already rejects boundary banks (where this derivative is undefined).
    """
    delta = np.asarray(delta, dtype=float)
    rhs = solution.defaults * (delta.T @ solution.payments)
    return np.linalg.solve(_default_system_matrix(system, solution), rhs)


def kth_derivative(
    system: FinancialSystem, solution: ClearingSolution, delta, k: int
) -> np.ndarray:
    """k-th order directional derivative, ``k! M^k p``.

    Computed with k matrix-vector applications of the propagation operator
    against one shared factorization; ``M^k`` is never formed. ``k = 0``
    returns the clearing vector itself.
    """
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    delta = np.asarray(delta, dtype=float)
    vector = solution.payments.copy()
    if k == 0:
        return vector
    lu = scipy.linalg.lu_factor(_default_system_matrix(system, solution))
    for _ in range(k):
        vector = scipy.linalg.lu_solve(lu, solution.defaults * (delta.T @ vector))
    return math.factorial(k) * vector


def propagation_operator(
    system: FinancialSystem, solution: ClearingSolution, delta
) -> np.ndarray:
    """The matrix ``M = (I - diag(d) Pi^T)^{-1} diag(d) D^T``."""
    delta = np.asarray(delta, dtype=float)
    return np.linalg.solve(
        _default_system_matrix(system, solution), solution.defaults[:, None] * delta.T
    )


def taylor_clearing(
    system: FinancialSystem,
    solution: ClearingSolution,
    delta,
    h: float,
    mode: str = "fixed",
) -> np.ndarray:
    """Perturbed clearing vector from the resolvent ``(I - h M)^{-1} p``.

    Exact (equal to re-clearing the perturbed system) whenever ``|h|`` stays
    below the default-set bound from :func:`clearnet.perturb.h_star_star`.
    The cheap necessary conditions are enforced here: the step must keep
    the fractions feasible and satisfy ``|h| * rho(M) < 1``; rewiring-mode
    directions additionally admit no negative step, since a positive link
    cannot be created backwards.
    """
    matrix = propagation_operator(system, solution, delta)
    radius = float(np.max(np.abs(np.linalg.eigvals(matrix)))) if system.n else 0.0
    feasible = h_star(system.relative_liabilities, delta, system.total_obligations)
    if mode == "rewiring":
        if h < 0:
            raise ValueError("rewiring directions admit no negative step")
        if h > feasible or (radius > 0 and h >= 1.0 / radius):
            raise ValueError(f"step {h} is outside the convergent range")
    elif mode == "fixed":
        if abs(h) > feasible or (radius > 0 and abs(h) >= 1.0 / radius):
            raise ValueError(f"step {h} is outside the convergent range")
    else:
        raise ValueError(f"unknown support mode {mode!r}")
    try:
        return np.linalg.solve(
            np.eye(system.n) - h * matrix, solution.payments
        )
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"resolvent is singular at h={h}: {exc}") from exc


def jacobian_spectrum(jacobian: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenvalues/eigenvectors of ``jacobian^T jacobian``.

    Dense symmetric eigensolve of the Gram matrix up to the size limit;
    beyond it the identical spectrum comes from a thin SVD (eigenvalues
    ``sigma^2`` padded with the exactly-zero remainder, eigenvectors
    restricted to the leading block).
    """
    n, d = jacobian.shape
    if d == 0:
        return np.zeros(0), np.zeros((0, 0))
    if d <= _DENSE_EIG_LIMIT:
        gram = jacobian.T @ jacobian
        values, vectors = scipy.linalg.eigh(gram)
        order = np.argsort(values)[::-1]
        return np.clip(values[order], 0.0, None), vectors[:, order]
    _, singular, right = scipy.linalg.svd(jacobian, full_matrices=False)
    values = np.zeros(d)
    values[: singular.size] = singular**2
    return values, right.T


def basis_jacobian(
    system: FinancialSystem, solution: ClearingSolution, basis: PerturbationBasis
) -> SensitivityOperator:
    """Assemble the derivative along every basis matrix at once.

    One factorization of ``I - diag(d) Pi^T`` is shared by all d columns.
    """
    n = system.n
    d = basis.dimension
    if d == 0:
        return SensitivityOperator(
            jacobian=np.zeros((n, 0)),
            eigenvalues=np.zeros(0),
            eigenvectors=np.zeros((0, 0)),
            solution=solution,
            basis=basis,
        )
    lu = scipy.linalg.lu_factor(_default_system_matrix(system, solution))
    # vectors.reshape(n, n, d) views column c of E_k at [c, :, k].
    stacked = basis.vectors.reshape(n, n, d)
    transposed_action = np.einsum("irk,r->ik", stacked, solution.payments)
    jacobian = scipy.linalg.lu_solve(lu, solution.defaults[:, None] * transposed_action)
    eigenvalues, eigenvectors = jacobian_spectrum(jacobian)
    return SensitivityOperator(
        jacobian=jacobian,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        solution=solution,
        basis=basis,
    )
