"""Exception hierarchy shared across the library.

Each class maps to one CLI exit code, so the command-line front end can
translate failures without inspecting messages.
"""

from __future__ import annotations


class ClearnetError(Exception):
    """Base class for all library-specific failures."""


class NetworkFileError(ClearnetError):
    """Input file could not be parsed, or its dimensions are inconsistent."""


class ValidationFailure(ClearnetError):
    """A loaded system violates a structural invariant.

    Carries the full report so callers can list every finding instead of
    only the first one.
    """

    def __init__(self, report):
        self.report = report
        errors = [f for f in report.findings if f.severity == "error"]
        msg = "; ".join(f"{f.code}: {f.message}" for f in errors) or "invalid system"
        super().__init__(msg)


class NonRegularSystemError(ClearnetError):
    """The system is not regular, so the clearing vector may not be unique.

    ``witness`` is a risk orbit (tuple of 0-based bank indices) whose
    aggregate external assets are zero.
    """

    def __init__(self, witness):
        self.witness = tuple(witness)
        super().__init__(
            f"system is not regular: orbit {self.witness} has zero external assets"
        )


class BoundaryBankError(ClearnetError):
    """Some bank sits numerically at the brink of default.

    Directional derivatives are undefined there, so the condition is
    reported instead of silently resolving the tie.
    """

    def __init__(self, banks):
        self.banks = tuple(banks)
        super().__init__(f"banks at the brink of default: {self.banks}")


class InadmissiblePerturbationError(ClearnetError):
    """A perturbation matrix violates the admissibility constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "inadmissible perturbation")


class NumericsError(ClearnetError):
    """An internal linear-algebra step failed (singular system, bad range)."""
