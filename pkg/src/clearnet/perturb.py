"""Admissible perturbations of the relative liabilities matrix.

A perturbation direction is an n-by-n matrix with zero diagonal, zero row
sums and zero obligation-weighted column sums, so that stepping along it
changes neither any bank's total liabilities nor its total interbank
assets. In fixed-support mode entries must vanish wherever the network has
no link; in rewiring mode new links may be created (entries on empty
positions must be nonnegative).

The set of admissible directions is a linear subspace of R^(n*n). Its
orthonormal basis is obtained from the null space of a constraint matrix on
the column-major vectorization ``vec(D)[r + n*c] = D[r, c]``; the basis is
returned with unit Frobenius norm matrices and every downstream quantity is
invariant under the (arbitrary) choice of basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .clearing import clear
from .errors import BoundaryBankError, NonRegularSystemError
from .model import FinancialSystem

# Constraint residual allowed when classifying a candidate matrix.
ADMISSIBLE_TOL = 1e-8

# Bisection budget for the default-set step bound: 60 halvings reach 1e-18
# relative resolution, far below the 1e-6 * h_star target.
_BISECT_MAX_ITER = 60
_BISECT_REL_TOL = 1e-6


def support_pattern(pi: np.ndarray, complete: bool = False) -> np.ndarray:
    """Boolean matrix of positions where a perturbation entry may be nonzero."""
    n = pi.shape[0]
    if complete:
        pattern = np.ones((n, n), dtype=bool)
    else:
        pattern = np.asarray(pi) > 0
    pattern = pattern.copy()
    np.fill_diagonal(pattern, False)
    return pattern


def constraint_matrix(pi, p_bar, mode: str = "fixed") -> scipy.sparse.csr_matrix:
    """Sparse (n^2 + 2n)-by-n^2 matrix whose null space is the admissible set.

    The first n^2 rows pin entries to zero wherever the support pattern
    forbids them (diagonal included); the next n rows are the row-sum
    constraints and the final n rows the obligation-weighted column sums.
    """
    pi = np.asarray(pi, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    n = pi.shape[0]
    pattern = support_pattern(pi, complete=(mode == "complete"))

    rows, cols, vals = [], [], []
    forbidden = ~pattern
    for r in range(n):
        for c in range(n):
            if forbidden[r, c]:
                k = r + n * c
                rows.append(k)
                cols.append(k)
                vals.append(1.0)
    for i in range(n):
        for j in range(n):
            rows.append(n * n + i)
            cols.append(i + n * j)
            vals.append(1.0)
            rows.append(n * n + n + i)
            cols.append(j + n * i)
            vals.append(p_bar[j])
    return scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(n * n + 2 * n, n * n)
    )


@dataclass(frozen=True, eq=False)
class PerturbationBasis:
    """Orthonormal basis of the admissible perturbation subspace.

    ``vectors`` has one column per basis matrix, holding its column-major
    vectorization; bases are pairwise orthonormal under the Frobenius inner
    product. ``support`` and ``weights`` record the pattern and obligation
    totals the basis was built from.
    """

    vectors: np.ndarray  # (n*n, d)
    n: int
    support: np.ndarray  # (n, n) bool
    weights: np.ndarray  # (n,) obligation totals

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=float)
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        support = np.asarray(self.support, dtype=bool).copy()
        support.setflags(write=False)
        object.__setattr__(self, "support", support)
        weights = np.asarray(self.weights, dtype=float).copy()
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def matrix(self, k: int) -> np.ndarray:
        return self.vectors[:, k].reshape(self.n, self.n, order="F")

    def matrices(self) -> np.ndarray:
        """All basis matrices stacked as a (d, n, n) array."""
        return np.stack([self.matrix(k) for k in range(self.dimension)])

    def combine(self, coefficients) -> np.ndarray:
        """Matrix form of ``sum_k z_k E_k``."""
        z = np.asarray(coefficients, dtype=float)
        return (self.vectors @ z).reshape(self.n, self.n, order="F")

    def coefficients(self, delta) -> np.ndarray:
        """Basis coordinates of (the projection of) a matrix."""
        vec = np.asarray(delta, dtype=float).reshape(-1, order="F")
        return self.vectors.T @ vec

    def project(self, delta) -> np.ndarray:
        """Orthogonal projection of any matrix onto the admissible subspace."""
        return self.combine(self.coefficients(delta))


def orthonormal_basis(pi, p_bar, mode: str = "fixed") -> PerturbationBasis:
    """Construct the orthonormal perturbation basis for a support pattern.

    The null space is computed by a singular value decomposition with rank
    tolerance ``max(shape) * eps * sigma_max``. Entries pinned to zero by
    the support pattern are eliminated from the constraint block first,
    which leaves the same subspace but keeps the decomposition at
    2n-by-(free entries) instead of (n^2 + 2n)-by-n^2.

    For a complete pattern and n >= 3 the dimension is ``n^2 - 3n + 1``;
    an empty basis (dimension 0) is returned when the constraints admit
    only the zero matrix.
    """
    if mode not in ("fixed", "complete"):
        raise ValueError(f"unknown basis mode {mode!r}")
    pi = np.asarray(pi, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    n = pi.shape[0]
    pattern = support_pattern(pi, complete=(mode == "complete"))

    free = np.flatnonzero(pattern.ravel(order="F"))
    if free.size == 0:
        return PerturbationBasis(np.zeros((n * n, 0)), n, pattern, p_bar)

    sums = np.zeros((2 * n, n * n))
    idx = np.arange(n)
    for i in range(n):
        sums[i, i + n * idx] = 1.0  # row i sums to zero
        sums[n + i, idx + n * i] = p_bar  # weighted column i sums to zero
    null = scipy.linalg.null_space(sums[:, free])
    vectors = np.zeros((n * n, null.shape[1]))
    vectors[free] = null
    return PerturbationBasis(vectors, n, pattern, p_bar)


def is_admissible(
    delta, pi, p_bar, mode: str = "fixed", tol: float = ADMISSIBLE_TOL
) -> tuple[bool, list[str]]:
    """Check the admissibility constraints, listing every violation.

    Row sums and the diagonal are compared against ``tol`` directly; the
    obligation-weighted column sums against ``tol * max(1, max p_bar)``
    since they carry currency units.
    """
    delta = np.asarray(delta, dtype=float)
    pi = np.asarray(pi, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    n = pi.shape[0]
    if delta.shape != (n, n):
        raise ValueError(f"perturbation must be {n}x{n}, got {delta.shape}")
    violations: list[str] = []

    diag = np.abs(np.diag(delta))
    for i in np.flatnonzero(diag > tol):
        violations.append(f"nonzero diagonal entry at bank {i}: {delta[i, i]!r}")

    row_sums = delta.sum(axis=1)
    for i in np.flatnonzero(np.abs(row_sums) > tol):
        violations.append(f"row {i} sums to {row_sums[i]!r}, not 0")

    col_sums = p_bar @ delta
    col_tol = tol * max(1.0, float(p_bar.max(initial=0.0)))
    for j in np.flatnonzero(np.abs(col_sums) > col_tol):
        violations.append(f"weighted column {j} sums to {col_sums[j]!r}, not 0")

    off_support = ~support_pattern(pi)
    np.fill_diagonal(off_support, False)  # diagonal reported separately
    if mode == "fixed":
        bad = off_support & (np.abs(delta) > tol)
        for r, c in np.argwhere(bad):
            violations.append(f"entry ({r},{c}) is outside the support: {delta[r, c]!r}")
    elif mode == "rewiring":
        bad = off_support & (delta < -tol)
        for r, c in np.argwhere(bad):
            violations.append(
                f"entry ({r},{c}) would delete a non-existent link: {delta[r, c]!r}"
            )
    else:
        raise ValueError(f"unknown support mode {mode!r}")
    return not violations, violations


def h_star(pi, delta, p_bar) -> float:
    """Largest step keeping every perturbed fraction inside [0, 1].

    Banks with zero total obligations are excluded, matching the all-zero
    row convention. Returns ``inf`` when no entry constrains the step (the
    zero direction, or entries confined to zero-obligation rows).
    """
    pi = np.asarray(pi, dtype=float)
    delta = np.asarray(delta, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    rows = p_bar > 0
    candidates = []
    negative = (delta < 0) & rows[:, None]
    if negative.any():
        candidates.append(np.min(-pi[negative] / delta[negative]))
    positive = (delta > 0) & rows[:, None]
    if positive.any():
        candidates.append(np.min((1.0 - pi[positive]) / delta[positive]))
    return float(min(candidates)) if candidates else math.inf


def perturbed_system(system: FinancialSystem, delta, h: float) -> FinancialSystem:
    """System with relative liabilities moved to ``Pi + h * delta``.

    Obligation totals, external assets and society vectors are untouched;
    nominal liabilities are rebuilt from the perturbed fractions. No
    validation is performed: steps at the feasibility edge may leave
    entries a rounding error outside [0, 1].
    """
    delta = np.asarray(delta, dtype=float)
    pi = system.relative_liabilities + h * delta
    liabilities = system.total_obligations[:, None] * pi
    return FinancialSystem(
        liabilities=liabilities,
        external_assets=system.external_assets,
        total_obligations=system.total_obligations,
        relative_liabilities=pi,
        society_liabilities=system.society_liabilities,
        society_weights=system.society_weights,
        names=system.names,
    )


def h_star_star(system: FinancialSystem, delta, direction: str = "both") -> float:
    """Largest step below which the default set provably stays unchanged.

    Each side of zero is probed separately up to its own feasibility bound
    (``h_star`` of the direction, resp. of its negation); the two-sided
    value is the smaller of the sides. Probes re-clear the perturbed system
    and compare default indicators; a probe that lands on a boundary bank
    or breaks regularity counts as a change. Bisection stops at absolute
    tolerance ``1e-6`` times the side's feasibility bound.

    ``direction`` is one of ``"both"``, ``"positive"`` or ``"negative"``;
    one-sided values suit rewiring directions, which only admit positive
    steps. The result is reported as the feasibility bound itself whenever
    the default set never changes (in particular ``inf`` for the zero
    direction).
    """
    base = clear(system)  # raises on a boundary bank at h = 0
    delta = np.asarray(delta, dtype=float)
    pi = system.relative_liabilities
    p_bar = system.total_obligations

    def one_side(signed_delta) -> float:
        bound = h_star(pi, signed_delta, p_bar)
        if math.isinf(bound):
            # Only zero-obligation rows are touched; clearing cannot react.
            return bound

        def unchanged(step: float) -> bool:
            try:
                probe = clear(perturbed_system(system, signed_delta, step))
            except (BoundaryBankError, NonRegularSystemError):
                return False
            return bool((probe.defaults == base.defaults).all())

        if unchanged(bound):
            return bound
        lo, hi = 0.0, bound
        tol = _BISECT_REL_TOL * bound
        for _ in range(_BISECT_MAX_ITER):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if unchanged(mid):
                lo = mid
            else:
                hi = mid
        return lo

    if direction == "positive":
        return one_side(delta)
    if direction == "negative":
        return one_side(-delta)
    if direction == "both":
        forward = one_side(delta)
        backward = one_side(-delta)
        return min(forward, backward)
    raise ValueError(f"unknown direction {direction!r}")
