"""Domain types, file ingestion and validation for interbank networks.

A financial system is a set of ``n`` banks with a nonnegative matrix of
nominal bilateral obligations, external assets, and optionally a vector of
obligations to an aggregate outside creditor ("society"). Society is never
stored as an extra matrix row/column: every formula downstream operates on
the n-by-n interbank block plus the side vectors ``society_liabilities``
and ``society_weights``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NetworkFileError, ValidationFailure

# Stochastic-row tolerance: inputs are double-precision ratios of the same
# data, so anything beyond this indicates inconsistent fields.
ROW_SUM_TOL = 1e-12

# Validation finding codes.
NEGATIVE_ENTRY = "negative-entry"
NONZERO_DIAGONAL = "nonzero-diagonal"
ROW_SUM_VIOLATION = "row-sum-violation"
ZERO_OBLIGATION_BANK = "zero-obligation-bank"
DISCONNECTED_SOCIETY = "disconnected-society"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FinancialSystem:
    """Immutable financial network.

    Fields
    ------
    liabilities:
        n-by-n nonnegative matrix, entry (i, j) is what bank i owes bank j.
    external_assets:
        Length-n nonnegative vector of assets held outside the network.
    total_obligations:
        Row sums of ``liabilities`` plus ``society_liabilities`` if present.
    relative_liabilities:
        Row-stochastic interbank fractions; rows with zero total obligations
        are all zeros by convention (the choice cannot affect clearing).
    society_liabilities / society_weights:
        Optional obligations to the outside creditor and their fractions of
        each bank's total obligations.
    """

    liabilities: np.ndarray
    external_assets: np.ndarray
    total_obligations: np.ndarray
    relative_liabilities: np.ndarray
    society_liabilities: np.ndarray | None = None
    society_weights: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "liabilities", _frozen_array(self.liabilities))
        object.__setattr__(self, "external_assets", _frozen_array(self.external_assets))
        object.__setattr__(self, "total_obligations", _frozen_array(self.total_obligations))
        object.__setattr__(
            self, "relative_liabilities", _frozen_array(self.relative_liabilities)
        )
        if self.society_liabilities is not None:
            object.__setattr__(
                self, "society_liabilities", _frozen_array(self.society_liabilities)
            )
            object.__setattr__(
                self, "society_weights", _frozen_array(self.society_weights)
            )
        n = self.liabilities.shape[0]
        if self.liabilities.shape != (n, n):
            raise NetworkFileError("liabilities matrix must be square")
        for name in ("external_assets", "total_obligations"):
            if getattr(self, name).shape != (n,):
                raise NetworkFileError(f"{name} must have length {n}")
        if self.relative_liabilities.shape != (n, n):
            raise NetworkFileError("relative liabilities must match liabilities shape")
        if self.society_liabilities is not None and self.society_liabilities.shape != (n,):
            raise NetworkFileError(f"society_liabilities must have length {n}")
        if self.names is not None and len(self.names) != n:
            raise NetworkFileError(f"names must have length {n}")

    @property
    def n(self) -> int:
        return self.liabilities.shape[0]

    @property
    def has_society(self) -> bool:
        return self.society_liabilities is not None

    @classmethod
    def from_liabilities(
        cls,
        liabilities,
        external_assets,
        society_liabilities=None,
        names=None,
        check: bool = True,
    ) -> "FinancialSystem":
        """Build a system from raw obligations, deriving all fractions.

        Rows with zero total obligations get an all-zero fraction row.
        With ``check`` (default) the result is validated and a
        :class:`ValidationFailure` is raised on any error finding.
        """
        liabilities = np.array(liabilities, dtype=float)
        external_assets = np.array(external_assets, dtype=float)
        if liabilities.ndim != 2 or liabilities.shape[0] != liabilities.shape[1]:
            raise NetworkFileError("liabilities matrix must be square")
        n = liabilities.shape[0]
        if external_assets.shape != (n,):
            raise NetworkFileError("external_assets length must match the matrix size")
        l0 = None
        if society_liabilities is not None:
            l0 = np.array(society_liabilities, dtype=float)
            if l0.shape != (n,):
                raise NetworkFileError("society_liabilities length must match the matrix size")

        p_bar = liabilities.sum(axis=1)
        if l0 is not None:
            p_bar = p_bar + l0
        pi = np.zeros_like(liabilities)
        pos = p_bar > 0
        pi[pos] = liabilities[pos] / p_bar[pos, None]
        pi0 = None
        if l0 is not None:
            pi0 = np.zeros(n)
            pi0[pos] = l0[pos] / p_bar[pos]

        system = cls(
            liabilities=liabilities,
            external_assets=external_assets,
            total_obligations=p_bar,
            relative_liabilities=pi,
            society_liabilities=l0,
            society_weights=pi0,
            names=tuple(names) if names is not None else None,
        )
        if check:
            report = validate(system)
            if not report.ok:
                raise ValidationFailure(report)
        return system


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # "error" | "warning"
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[ValidationIssue, ...]

    @property
    def errors(self) -> tuple[ValidationIssue, ...]:
        return tuple(f for f in self.findings if f.severity == "error")

    @property
    def warnings(self) -> tuple[ValidationIssue, ...]:
        return tuple(f for f in self.findings if f.severity == "warning")

    @property
    def ok(self) -> bool:
        return not self.errors


def validate(system: FinancialSystem, tol: float = ROW_SUM_TOL) -> ValidationReport:
    """Check every structural invariant of a financial system.

    An empty error list is equivalent to all invariants holding; zero
    obligation banks are reported as warnings since the all-zero fraction
    row convention keeps them valid.
    """
    findings: list[ValidationIssue] = []
    L = system.liabilities
    x = system.external_assets
    p_bar = system.total_obligations
    pi = system.relative_liabilities
    n = system.n

    def err(code, msg):
        findings.append(ValidationIssue("error", code, msg))

    def warn(code, msg):
        findings.append(ValidationIssue("warning", code, msg))

    if np.any(L < 0):
        i, j = np.argwhere(L < 0)[0]
        err(NEGATIVE_ENTRY, f"liabilities[{i},{j}] = {L[i, j]} is negative")
    if np.any(x < 0):
        i = int(np.argmax(x < 0))
        err(NEGATIVE_ENTRY, f"external_assets[{i}] = {x[i]} is negative")
    if system.has_society and np.any(system.society_liabilities < 0):
        i = int(np.argmax(system.society_liabilities < 0))
        err(NEGATIVE_ENTRY, f"society_liabilities[{i}] is negative")

    diag = np.abs(np.diag(L))
    if np.any(diag > 0):
        i = int(np.argmax(diag > 0))
        err(NONZERO_DIAGONAL, f"bank {i} has a self-liability {L[i, i]}")

    expected = L.sum(axis=1) + (
        system.society_liabilities if system.has_society else 0.0
    )
    scale = np.maximum(1.0, np.abs(expected))
    if np.any(np.abs(p_bar - expected) > 1e-9 * scale):
        i = int(np.argmax(np.abs(p_bar - expected) > 1e-9 * scale))
        err(
            ROW_SUM_VIOLATION,
            f"total_obligations[{i}] disagrees with the liability row sum",
        )

    row_sums = pi.sum(axis=1) + (system.society_weights if system.has_society else 0.0)
    for i in range(n):
        if p_bar[i] > 0:
            if abs(row_sums[i] - 1.0) > tol:
                err(
                    ROW_SUM_VIOLATION,
                    f"relative liabilities of bank {i} sum to {row_sums[i]!r}, not 1",
                )
        else:
            warn(ZERO_OBLIGATION_BANK, f"bank {i} has no obligations")
            if np.any(pi[i] != 0):
                err(ROW_SUM_VIOLATION, f"zero-obligation bank {i} has nonzero fractions")

    if system.has_society:
        if not np.any(system.society_weights > 0):
            err(DISCONNECTED_SOCIETY, "no bank owes anything to society")
        if np.any(p_bar <= 0):
            i = int(np.argmax(p_bar <= 0))
            err(
                DISCONNECTED_SOCIETY,
                f"bank {i} owes nobody; fold it into the society node instead",
            )

    return ValidationReport(tuple(findings))


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------

def load_system(path, side_path=None) -> FinancialSystem:
    """Load a network from a JSON document or a CSV matrix plus side file.

    JSON: object with ``liabilities`` (n-by-n array of arrays),
    ``external_assets`` (length n), optional ``society_liabilities`` and
    ``names``. CSV: ``path`` holds the bare n-by-n matrix and ``side_path``
    a CSV with header ``external_assets[,society_liabilities]``.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            document = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise NetworkFileError(f"cannot parse {path}: {exc}") from exc
        return system_from_document(document)
    if side_path is None:
        raise NetworkFileError("CSV input needs the side file with external assets")
    try:
        matrix = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise NetworkFileError(f"cannot parse {path}: {exc}") from exc
    vectors = _read_csv_columns(Path(side_path))
    if "external_assets" not in vectors:
        raise NetworkFileError(f"{side_path} is missing an external_assets column")
    return FinancialSystem.from_liabilities(
        matrix,
        vectors["external_assets"],
        society_liabilities=vectors.get("society_liabilities"),
    )


def system_from_document(document: dict) -> FinancialSystem:
    """Build a system from an already-parsed JSON document."""
    if not isinstance(document, dict) or "liabilities" not in document:
        raise NetworkFileError("network document must contain a liabilities matrix")
    try:
        return FinancialSystem.from_liabilities(
            document["liabilities"],
            document.get("external_assets"),
            society_liabilities=document.get("society_liabilities"),
            names=document.get("names"),
        )
    except (TypeError, ValueError) as exc:
        raise NetworkFileError(f"malformed network document: {exc}") from exc


def system_to_document(system: FinancialSystem) -> dict:
    document = {
        "liabilities": system.liabilities.tolist(),
        "external_assets": system.external_assets.tolist(),
    }
    if system.has_society:
        document["society_liabilities"] = system.society_liabilities.tolist()
    if system.names is not None:
        document["names"] = list(system.names)
    return document


def save_system(system: FinancialSystem, path) -> None:
    """Write the JSON form; numeric fields survive a round-trip bit-exactly."""
    Path(path).write_text(json.dumps(system_to_document(system), indent=2))


def _read_csv_columns(path: Path) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise NetworkFileError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise NetworkFileError(f"{path} is empty")
    header = [c.strip() for c in rows[0]]
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    except ValueError as exc:
        raise NetworkFileError(f"non-numeric value in {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise NetworkFileError(f"{path} rows do not match its header")
    return {name: data[:, k] for k, name in enumerate(header)}


# ---------------------------------------------------------------------------
# Balance-sheet mapping
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BalanceSheetMapping:
    """Model variables implied by published balance-sheet aggregates.

    ``interbank_liabilities`` are per-bank totals only; a bilateral matrix
    with matching row sums must be supplied separately.
    """

    interbank_liabilities: np.ndarray
    society_liabilities: np.ndarray
    external_assets: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "interbank_liabilities", _frozen_array(self.interbank_liabilities)
        )
        object.__setattr__(
            self, "society_liabilities", _frozen_array(self.society_liabilities)
        )
        object.__setattr__(self, "external_assets", _frozen_array(self.external_assets))


def from_balance_sheet(total_assets, capital, interbank_assets) -> BalanceSheetMapping:
    """Map (total assets, capital, interbank assets) to model variables.

    Interbank liabilities are set equal to interbank assets; the remainder
    of the balance sheet becomes the obligation to society and the external
    assets. Each bank's implied net worth must equal its capital, which is
    asserted before returning.
    """
    total_assets = np.asarray(total_assets, dtype=float)
    capital = np.asarray(capital, dtype=float)
    interbank_assets = np.asarray(interbank_assets, dtype=float)
    if not (total_assets.shape == capital.shape == interbank_assets.shape):
        raise ValueError("balance-sheet vectors must share one shape")

    interbank_liabilities = interbank_assets.copy()
    society = total_assets - interbank_liabilities - capital
    external = total_assets - interbank_assets
    if np.any(society < 0):
        i = int(np.argmax(society < 0))
        raise ValueError(
            f"bank {i}: implied society liability {society[i]} is negative"
        )
    if np.any(external < 0):
        i = int(np.argmax(external < 0))
        raise ValueError(f"bank {i}: implied external assets {external[i]} are negative")

    # Net worth identity: total assets minus total obligations is capital.
    p_bar = society + interbank_liabilities
    scale = np.maximum(1.0, np.abs(capital))
    if np.any(np.abs(total_assets - p_bar - capital) > 1e-9 * scale):
        raise ArithmeticError("net worth does not reduce to capital")
    return BalanceSheetMapping(interbank_liabilities, society, external)


def load_balance_sheet(path) -> BalanceSheetMapping:
    """Read a CSV with columns total_assets, capital, interbank_assets."""
    vectors = _read_csv_columns(Path(path))
    for column in ("total_assets", "capital", "interbank_assets"):
        if column not in vectors:
            raise NetworkFileError(f"{path} is missing a {column} column")
    return from_balance_sheet(
        vectors["total_assets"], vectors["capital"], vectors["interbank_assets"]
    )


# ---------------------------------------------------------------------------
# Regularity and support
# ---------------------------------------------------------------------------

def is_regular(system: FinancialSystem) -> tuple[bool, tuple[int, ...] | None]:
    """Check that every risk orbit can draw on positive external assets.

    The orbit of bank ``i`` is every bank reachable (including ``i``) along
    directed edges where a positive liability exists. The society node, when
    present, absorbs payments and contributes no assets, so it never enters
    the sum. Returns ``(True, None)``, or ``(False, orbit)`` with the first
    violating orbit as a witness (0-based indices).
    """
    L = system.liabilities
    x = system.external_assets
    n = system.n
    adjacency = L > 0

    for start in range(n):
        reached = np.zeros(n, dtype=bool)
        reached[start] = True
        frontier = reached.copy()
        while frontier.any():
            step = adjacency[frontier].any(axis=0) & ~reached
            reached |= step
            frontier = step
        if not x[reached].sum() > 0:
            return False, tuple(int(i) for i in np.flatnonzero(reached))
    return True, None


def complete_support(system: FinancialSystem) -> FinancialSystem:
    """Return a stand-in system with fully connected interbank support.

    External assets and total obligations are unchanged; each bank's
    interbank mass is spread uniformly over all other banks. Only the
    support pattern and the obligation totals matter to the perturbation
    basis built from the result, so the placeholder values are arbitrary.
    A bank owing only to society keeps an empty row, since no positive
    interbank row can preserve its obligations.
    """
    n = system.n
    p_bar = system.total_obligations
    l0 = system.society_liabilities
    interbank_mass = p_bar - (l0 if l0 is not None else 0.0)
    if n == 1:
        return system

    liabilities = np.repeat(interbank_mass[:, None] / (n - 1), n, axis=1)
    np.fill_diagonal(liabilities, 0.0)
    pi = np.zeros((n, n))
    pos = p_bar > 0
    pi[pos] = liabilities[pos] / p_bar[pos, None]
    return FinancialSystem(
        liabilities=liabilities,
        external_assets=system.external_assets,
        total_obligations=p_bar,
        relative_liabilities=pi,
        society_liabilities=l0,
        society_weights=system.society_weights,
        names=system.names,
    )
