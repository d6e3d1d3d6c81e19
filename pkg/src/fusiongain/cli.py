"""Command-line front end.

Two subcommands: ``assess`` runs one utility assessment on a CSV dataset,
``simulate`` reproduces Monte Carlo summary tables over a (b, n) grid.  All
randomness flows from --seed; repeated invocations with identical flags
produce identical output, byte for byte.  Errors are written to stderr as a
single JSON line with the error class name as machine-readable code.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .core import UtilityEstimate, relative_utility
from .errors import (
    EmptyData,
    FusionGainError,
    IoError,
    ParseError,
    UsageError,
)
from .linreg_utility import assess_linreg
from .mean_utility import MeanAssessmentConfig, assess_mean
from .nuisance import Dataset
from .quantile_utility import QuantileAssessmentConfig, assess_quantile
from .simulation import (
    DgpConfig,
    METHODS,
    MonteCarloCell,
    SimulationReport,
    cell_seed,
    run_monte_carlo,
)


def parse_csv(path: str, response: str | None = None) -> Dataset:
    """Read a header + numeric rows CSV into a Dataset.

    One column (``response``, default the first) becomes y; the remaining
    columns become x in file order.  Any missing or non-numeric cell fails
    the parse, with the offending file rows listed.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise IoError(f"cannot read {path}: {err}") from err
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise EmptyData(f"{path} is empty")
    header = [name.strip() for name in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyData(f"{path} has a header but no data rows")
    response_name = response if response is not None else header[0]
    if response_name not in header:
        raise ParseError(f"response column {response_name!r} not in header {header}")
    if len(header) < 2:
        raise EmptyData(f"{path} needs at least one covariate column besides the response")

    bad: list[tuple[int, str]] = []
    values = []
    for line_no, row in enumerate(body, start=2):
        if len(row) != len(header):
            bad.append((line_no, "<row>"))
            continue
        parsed = []
        for name, cell in zip(header, row):
            try:
                value = float(cell)
            except ValueError:
                bad.append((line_no, name))
                continue
            if value != value or value in (float("inf"), float("-inf")):
                bad.append((line_no, name))
                continue
            parsed.append(value)
        if len(parsed) == len(header):
            values.append(parsed)
    if bad:
        listing = ", ".join(f"row {line} (column {col})" for line, col in bad[:20])
        more = "" if len(bad) <= 20 else f" and {len(bad) - 20} more"
        raise ParseError(
            f"missing or non-numeric cells: {listing}{more}", locations=bad
        )

    response_idx = header.index(response_name)
    y = [row[response_idx] for row in values]
    x = [[v for j, v in enumerate(row) if j != response_idx] for row in values]
    names = tuple(name for j, name in enumerate(header) if j != response_idx)
    return Dataset(y, x, names)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures through the JSON error path
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fusiongain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    assess = sub.add_parser("assess", help="assess one dataset")
    assess.add_argument("--method", required=True, choices=METHODS)
    assess.add_argument("--input", required=True, help="CSV file with a header row")
    assess.add_argument("--nu", required=True, type=float,
                        help="n / (n + N) for the contemplated external sample size N")
    assess.add_argument("--tau", type=float, default=0.5, help="quantile level")
    assess.add_argument("--s-column", default=None,
                        help="designated covariate column for method linreg")
    assess.add_argument("--response", default=None,
                        help="response column name (default: first column)")
    assess.add_argument("--alpha", type=float, default=0.95)
    assess.add_argument("--folds", type=int, default=5)
    assess.add_argument("--seed", type=int, default=0)
    assess.add_argument("--relative", action="store_true",
                        help="also report utility relative to direct response data")
    assess.add_argument("--format", choices=("json", "csv", "text"), default="text")
    assess.add_argument("--regressor", choices=("local-linear", "k-nn", "ols-linear"),
                        default="local-linear",
                        help="nuisance regressor for mean-conditional and quantile")
    assess.add_argument("--center", action="store_true",
                        help="subtract covariate column means before method linreg")

    simulate = sub.add_parser("simulate", help="reproduce Monte Carlo tables")
    simulate.add_argument("--method", required=True, choices=METHODS)
    simulate.add_argument("--b", required=True, type=_float_list,
                          help="comma-separated signal strengths")
    simulate.add_argument("--n", required=True, type=_int_list,
                          help="comma-separated sample sizes")
    simulate.add_argument("--tau", type=_float_list, default=[0.5],
                          help="comma-separated quantile levels (method quantile)")
    simulate.add_argument("--reps", required=True, type=int)
    simulate.add_argument("--seed", required=True, type=int)
    simulate.add_argument("--out", required=True, help="output directory")
    simulate.add_argument("--nu", type=float, default=0.5)
    simulate.add_argument("--rho", type=float, default=0.2)
    simulate.add_argument("--alpha", type=float, default=0.95)
    simulate.add_argument("--folds", type=int, default=5)
    simulate.add_argument("--workers", type=int, default=1)
    return parser


def _estimate_payload(estimate: UtilityEstimate, seed: int, with_relative: bool) -> dict:
    payload = {
        "method": estimate.method,
        "n": estimate.n,
        "nu": estimate.nu,
        "alpha": estimate.alpha,
        "seed": seed,
        "theta_hat_raw": estimate.theta_hat_raw,
        "theta_hat": estimate.theta_hat,
        "theta_tilde_raw": estimate.theta_tilde_raw,
        "gamma_hat": estimate.gamma_hat,
        "ci_raw": {"lo": estimate.ci_raw.lo, "hi": estimate.ci_raw.hi},
        "ci": {"lo": estimate.ci.lo, "hi": estimate.ci.hi},
    }
    if with_relative:
        rel = relative_utility(estimate)
        payload["relative"] = {
            "point": rel.point,
            "ci": {"lo": rel.ci.lo, "hi": rel.ci.hi},
        }
    return payload


def _flatten(payload: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in payload.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}_"))
        else:
            flat[name] = value
    return flat


def _print_payload(payload: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
        return
    flat = _flatten(payload)
    if fmt == "csv":
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(flat.keys())
        writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v
                         for v in flat.values()])
        return
    width = max(len(k) for k in flat)
    for key, value in flat.items():
        print(f"{key:<{width}}  {value}")


def _resolve_s_index(data: Dataset, name: str | None) -> int:
    if name is None:
        return 0
    if data.column_names is None or name not in data.column_names:
        raise UsageError(f"--s-column {name!r} not among covariates {data.column_names}")
    return data.column_names.index(name)


def _run_assess(args) -> int:
    if not 0.0 <= args.nu < 1.0:
        raise UsageError(f"--nu must be in [0, 1), got {args.nu}")
    if not 0.0 < args.tau < 1.0:
        raise UsageError(f"--tau must be in (0, 1), got {args.tau}")
    if not 0.0 < args.alpha < 1.0:
        raise UsageError(f"--alpha must be in (0, 1), got {args.alpha}")
    data = parse_csv(args.input, response=args.response)
    if args.method in ("mean-linear", "mean-conditional"):
        cfg = MeanAssessmentConfig(
            nu=args.nu,
            g_mode="linear" if args.method == "mean-linear" else "conditional-mean",
            n_folds=args.folds,
            alpha=args.alpha,
            seed=args.seed,
            regressor=args.regressor,
        )
        estimate = assess_mean(data, cfg)
    elif args.method == "quantile":
        cfg = QuantileAssessmentConfig(
            nu=args.nu,
            tau=args.tau,
            n_folds=args.folds,
            alpha=args.alpha,
            seed=args.seed,
            cdf_regressor=args.regressor,
        )
        estimate = assess_quantile(data, cfg)
    else:
        s_index = _resolve_s_index(data, args.s_column)
        if args.center:
            centered = data.x - data.x.mean(axis=0)
            data = Dataset(data.y, centered, data.column_names)
        estimate = assess_linreg(data, s_index, args.nu, args.alpha)
    _print_payload(_estimate_payload(estimate, args.seed, args.relative), args.format)
    return 0


def _run_simulate(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    cells = []
    taus = args.tau if args.method == "quantile" else [0.5]
    for b in args.b:
        for n in args.n:
            for tau in taus:
                dgp = DgpConfig(b=b, rho=args.rho, n=n, nu=args.nu)
                cells.append(
                    MonteCarloCell(
                        method=args.method,
                        dgp=dgp,
                        tau=tau,
                        alpha=args.alpha,
                        n_folds=args.folds,
                    )
                )
    results = [
        run_monte_carlo(cell, args.reps, cell_seed(args.seed, cell), workers=args.workers)
        for cell in cells
    ]
    report = SimulationReport(rows=tuple(results))
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "simulation.csv").write_text(report.to_csv(), encoding="utf-8")
        (out_dir / "simulation.txt").write_text(report.to_text(), encoding="utf-8")
    except OSError as err:
        raise IoError(f"cannot write to {out_dir}: {err}") from err
    print(report.to_text(), end="")
    for row in report.rows:
        if row.flagged:
            print(
                f"warning: cell {row.method} b={row.b} n={row.n} extra={row.extra} "
                f"had {row.n_failed}/{row.reps} failed replications",
                file=sys.stderr,
            )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "assess":
            return _run_assess(args)
        return _run_simulate(args)
    except UsageError as err:
        print(json.dumps({"error": "UsageError", "message": str(err)}), file=sys.stderr)
        return 2
    except FusionGainError as err:
        print(
            json.dumps(
                {"error": type(err).__name__, "stage": err.stage, "message": str(err)}
            ),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
