"""Command-line front end.

Thin wrappers over the library: every command loads a network file, runs
one analysis and emits a machine-readable report. JSON is the default
format (``bands`` defaults to CSV, its natural shape); IEEE infinities are
serialized as ``null`` plus a ``<field>_note`` sidecar since JSON has no
representation for them. Failures map to stable exit codes:

    0 success          3 boundary bank
    1 I/O or parsing   4 inadmissible perturbation
    2 non-regular      5 internal numeric failure

Verbosity is controlled by the ``CLEARNET_LOG`` environment variable
(standard logging level names).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import extremal, perturb, sensitivity, stochastic
from .clearing import clear
from .errors import (
    BoundaryBankError,
    ClearnetError,
    InadmissiblePerturbationError,
    NetworkFileError,
    NonRegularSystemError,
    NumericsError,
    ValidationFailure,
)
from .model import FinancialSystem, load_system, validate
from .perturb import h_star, h_star_star, is_admissible, orthonormal_basis
from .sensitivity import basis_jacobian, directional_derivative, taylor_clearing

log = logging.getLogger("clearnet")

EXIT_OK = 0
EXIT_IO = 1
EXIT_NON_REGULAR = 2
EXIT_BOUNDARY = 3
EXIT_INADMISSIBLE = 4
EXIT_NUMERIC = 5

COMMANDS = ("clear", "sens", "worst", "bounds", "basis", "dist", "bands", "validate")


@dataclass
class RunConfig:
    """Normalized invocation options; exactly one command per run."""

    command: str
    input: str | None
    output: str | None
    fmt: str | None
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    society: bool = False
    complete: bool = False
    normalize: str = "none"
    rewiring: bool = False
    delta: str | None = None
    h: float | None = None
    law: str = "uniform"
    samples: int = 100_000
    samples_output: str | None = None
    h_grid: tuple[float, ...] = ()
    levels: tuple[float, ...] = (0.5, 0.9)
    dump: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        return cls(
            command=args.command,
            input=args.input,
            output=args.output,
            fmt=args.format,
            seed=args.seed,
            threads=args.threads if args.threads else (os.cpu_count() or 1),
            society=getattr(args, "society", False),
            complete=getattr(args, "complete", False),
            normalize=getattr(args, "normalize", "none"),
            rewiring=getattr(args, "rewiring", False),
            delta=getattr(args, "delta", None),
            h=getattr(args, "h", None),
            law=getattr(args, "law", "uniform"),
            samples=getattr(args, "samples", 100_000),
            samples_output=getattr(args, "samples_output", None),
            h_grid=tuple(_parse_floats(getattr(args, "h_grid", None) or "")),
            levels=tuple(_parse_floats(getattr(args, "levels", None) or "0.5,0.9")),
            dump=getattr(args, "dump", False),
        )


def _parse_floats(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="network file: JSON, or MATRIX.csv,SIDE.csv")
    common.add_argument("--output", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=0, help="0 = machine parallelism")
    common.add_argument("--society", action="store_true", help="society-payout objective")
    common.add_argument("--complete", action="store_true", help="complete-support basis")
    common.add_argument(
        "--normalize", choices=extremal.NORMALIZATIONS, default="none"
    )

    parser = argparse.ArgumentParser(
        prog="clearnet",
        description="Clearing vectors and their sensitivity to liability errors",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("clear", parents=[common])
    sub.add_parser("validate", parents=[common])

    sens = sub.add_parser("sens", parents=[common])
    sens.add_argument("--delta", required=True, help="JSON n-by-n perturbation matrix")
    sens.add_argument("--h", type=float, default=None, help="cross-check step size")
    sens.add_argument(
        "--rewiring", action="store_true", help="allow link creation (one-sided steps)"
    )

    sub.add_parser("worst", parents=[common])
    sub.add_parser("bounds", parents=[common])

    basis = sub.add_parser("basis", parents=[common])
    basis.add_argument("--dump", action="store_true", help="include the basis matrices")

    dist = sub.add_parser("dist", parents=[common])
    dist.add_argument("--law", default="uniform", help="uniform | gaussian")
    dist.add_argument("--samples", type=int, default=100_000)
    dist.add_argument("--samples-output", help="where to write the sorted sample CSV")

    bands = sub.add_parser("bands", parents=[common])
    bands.add_argument("--law", default="uniform", help="uniform | gaussian")
    bands.add_argument("--samples", type=int, default=10_000)
    bands.add_argument("--h-grid", required=True, help="comma-separated step sizes")
    bands.add_argument("--levels", default="0.5,0.9", help="comma-separated levels")
    return parser


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _set_number(payload: dict, key: str, value) -> None:
    """Store a float, mapping infinities to null plus a sidecar note."""
    if value is None:
        payload[key] = None
    elif math.isinf(value):
        payload[key] = None
        payload[f"{key}_note"] = "infinite"
    else:
        payload[key] = float(value)


def _payload_csv(payload: dict) -> str:
    """Generic key,value flattening for commands without a natural CSV."""
    buffer = io.StringIO()
    writer = csv.writer(buffer)

    def walk(prefix, value):
        if isinstance(value, dict):
            for k, v in value.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(value, (list, tuple)):
            for i, v in enumerate(value):
                walk(f"{prefix}[{i}]", v)
        else:
            writer.writerow([prefix, value])

    walk("", payload)
    return buffer.getvalue()


def _emit(config: RunConfig, payload: dict, csv_text: str | None = None) -> None:
    fmt = config.fmt or ("csv" if csv_text is not None and config.command == "bands" else "json")
    if fmt == "csv":
        text = csv_text if csv_text is not None else _payload_csv(payload)
    else:
        text = json.dumps(payload, indent=2)
    if config.output:
        Path(config.output).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _load_network(config: RunConfig) -> FinancialSystem:
    if not config.input:
        raise NetworkFileError("--input is required")
    if "," in config.input:
        matrix_path, side_path = (part.strip() for part in config.input.split(",", 1))
        return load_system(matrix_path, side_path)
    return load_system(config.input)


def _load_matrix(path: str) -> np.ndarray:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise NetworkFileError(f"cannot parse {path}: {exc}") from exc
    matrix = np.asarray(data, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NetworkFileError(f"{path} does not hold a square matrix")
    return matrix


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_clear(config: RunConfig) -> int:
    system = _load_network(config)
    solution = clear(system)
    payload = {
        "payments": solution.payments.tolist(),
        "defaults": solution.defaults.tolist(),
        "society_payout": solution.society_payout,
        "iterations": solution.iterations,
        "input": config.input,
    }
    _emit(config, payload)
    return EXIT_OK


def cmd_validate(config: RunConfig) -> int:
    try:
        system = _load_network(config)
    except ValidationFailure as exc:
        report = exc.report
        _emit(config, _validation_payload(report, valid=False))
        return EXIT_IO
    report = validate(system)
    _emit(config, _validation_payload(report, valid=report.ok))
    return EXIT_OK if report.ok else EXIT_IO


def _validation_payload(report, valid: bool) -> dict:
    return {
        "valid": valid,
        "findings": [
            {"severity": f.severity, "code": f.code, "message": f.message}
            for f in report.findings
        ],
    }


def cmd_sens(config: RunConfig) -> int:
    system = _load_network(config)
    delta = _load_matrix(config.delta)
    mode = "rewiring" if config.rewiring else "fixed"
    admissible, violations = is_admissible(
        delta, system.relative_liabilities, system.total_obligations, mode
    )
    if not admissible:
        raise InadmissiblePerturbationError(violations)

    solution = clear(system)
    derivative = directional_derivative(system, solution, delta)
    step_bound = h_star(delta=delta, pi=system.relative_liabilities, p_bar=system.total_obligations)
    direction = "positive" if config.rewiring else "both"
    stable_bound = h_star_star(system, delta, direction=direction)

    payload: dict = {"derivative": derivative.tolist(), "seed": config.seed}
    _set_number(payload, "h_star", step_bound)
    _set_number(payload, "h_star_star", stable_bound)

    if config.h is not None:
        h = config.h
        clamped = False
        if math.isfinite(stable_bound) and abs(h) >= stable_bound:
            h = math.copysign((1.0 - 1e-9) * stable_bound, h)
            clamped = True
            log.warning("step %.6g exceeds the stable range; clamped to %.6g", config.h, h)
        resolvent = taylor_clearing(system, solution, delta, h, mode=mode)
        resolved = clear(perturb.perturbed_system(system, delta, h)).payments
        payload["taylor_check"] = {
            "h": h,
            "h_clamped": clamped,
            "resolvent": resolvent.tolist(),
            "resolved": resolved.tolist(),
            "max_gap": float(np.max(np.abs(resolvent - resolved))),
        }
    _emit(config, payload)
    return EXIT_OK


def _basis_for(config: RunConfig, system: FinancialSystem):
    mode = "complete" if config.complete else "fixed"
    return orthonormal_basis(
        system.relative_liabilities, system.total_obligations, mode
    ), mode


def cmd_worst(config: RunConfig) -> int:
    system = _load_network(config)
    basis, mode = _basis_for(config, system)
    if config.society:
        report = extremal.worst_society_shortfall(system, basis)
        lower, upper = extremal.society_bounds(system)
    else:
        report = extremal.worst_case_deviation(system, basis, config.normalize)
        lower, upper = extremal.deviation_bounds(system, config.normalize)
    payload = {
        "objective": report.objective,
        "relative_objective": report.relative_objective,
        "optimizer": None if report.optimizer is None else report.optimizer.tolist(),
        "degenerate": report.degenerate,
        "sign_ambiguous": report.sign_ambiguous,
        "bounds": {"lower": lower, "upper": upper},
        "basis_mode": mode,
        "normalization": report.normalization,
        "society": config.society,
    }
    _emit(config, payload)
    return EXIT_OK


def cmd_bounds(config: RunConfig) -> int:
    system = _load_network(config)
    if config.society:
        lower, upper = extremal.society_bounds(system)
    else:
        lower, upper = extremal.deviation_bounds(system, config.normalize)
    _emit(
        config,
        {
            "lower": lower,
            "upper": upper,
            "society": config.society,
            "normalization": config.normalize,
        },
    )
    return EXIT_OK


def cmd_basis(config: RunConfig) -> int:
    system = _load_network(config)
    basis, mode = _basis_for(config, system)
    payload = {"dimension": basis.dimension, "mode": mode, "n": system.n}
    if config.dump:
        payload["matrices"] = [basis.matrix(k).tolist() for k in range(basis.dimension)]
    _emit(config, payload)
    return EXIT_OK


def cmd_dist(config: RunConfig) -> int:
    system = _load_network(config)
    basis, mode = _basis_for(config, system)
    solution = clear(system)
    operator = basis_jacobian(system, solution, basis)
    if config.society:
        if not system.has_society:
            raise NetworkFileError("--society requires a network with society liabilities")
        report = stochastic.society_distribution(
            operator,
            system.society_weights,
            law=config.law,
            n_samples=config.samples,
            seed=config.seed,
            threads=config.threads,
        )
    else:
        report = stochastic.deviation_distribution(
            operator,
            law=config.law,
            n_samples=config.samples,
            seed=config.seed,
            threads=config.threads,
        )

    samples_path = config.samples_output
    if samples_path is None:
        samples_path = (
            str(Path(config.output).with_suffix(".samples.csv"))
            if config.output
            else "clearnet-samples.csv"
        )
    Path(samples_path).write_text(
        "\n".join(repr(v) for v in report.samples.tolist()) + "\n"
    )

    payload = {
        "law": report.law,
        "quantity": report.quantity,
        "n_samples": report.n_samples,
        "seed": report.seed,
        "basis_mode": mode,
        "eigenvalues": report.eigenvalues.tolist(),
        "analytic_points": report.analytic,
        "samples_path": samples_path,
    }
    if report.society_norm is not None:
        payload["society_norm"] = report.society_norm
    _emit(config, payload)
    return EXIT_OK


def cmd_bands(config: RunConfig) -> int:
    system = _load_network(config)
    if not config.h_grid:
        raise NetworkFileError("--h-grid must list at least one step size")
    result = stochastic.confidence_bands(
        system,
        law=config.law,
        h_grid=config.h_grid,
        levels=config.levels,
        n_samples=config.samples,
        seed=config.seed,
        threads=config.threads,
    )
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["h", "level", "low", "high", "rejected_fraction"])
    for row in result.rows:
        writer.writerow([row.h, row.level, row.low, row.high, row.rejected_fraction])
    payload = {
        "law": result.law,
        "seed": result.seed,
        "n_samples": result.n_samples,
        "rows": [
            {
                "h": row.h,
                "level": row.level,
                "low": row.low,
                "high": row.high,
                "first_order_low": row.first_order_low,
                "first_order_high": row.first_order_high,
                "rejected_fraction": row.rejected_fraction,
            }
            for row in result.rows
        ],
    }
    _emit(config, payload, csv_text=buffer.getvalue())
    return EXIT_OK


_DISPATCH = {
    "clear": cmd_clear,
    "validate": cmd_validate,
    "sens": cmd_sens,
    "worst": cmd_worst,
    "bounds": cmd_bounds,
    "basis": cmd_basis,
    "dist": cmd_dist,
    "bands": cmd_bands,
}


def main(argv=None) -> int:
    level = os.environ.get("CLEARNET_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s")
    log.setLevel(level if level in logging._nameToLevel else "WARNING")

    parser = _build_parser()
    args = parser.parse_args(argv)
    config = RunConfig.from_args(args)
    try:
        return _DISPATCH[config.command](config)
    except (NetworkFileError, ValidationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonRegularSystemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NON_REGULAR
    except BoundaryBankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUNDARY
    except InadmissiblePerturbationError as exc:
        print("error: inadmissible perturbation", file=sys.stderr)
        for violation in exc.violations:
            print(f"  {violation}", file=sys.stderr)
        return EXIT_INADMISSIBLE
    except (NumericsError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
