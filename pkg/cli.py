import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Literal

import click
import polars as pl

from actions import GridSkippedWarning, log, log_group, print_error, warn
from estimate import SAMPLE_SCHEMA, SampleTable, estimate_moments
from exact import upper_variance
from model import (
    InvariantViolation,
    MomentEntry,
    MomentSet,
    Single,
    ValidationError,
    Witness,
    build_moment_set,
)
from oracle import OracleConfig, minimax_oracle, simplex_grid
from qp import QpInstance, solve

COMMAND = Literal["variance", "qp", "oracle", "estimate"]
INPUT_KIND = Literal["moments", "moments-variance", "samples"]
OUTPUT_FORMAT = Literal["json", "plain"]

_COMMANDS: list[COMMAND] = ["variance", "qp", "oracle", "estimate"]
_INPUT_KINDS: list[INPUT_KIND] = ["moments", "moments-variance", "samples"]
_OUTPUT_FORMATS: list[OUTPUT_FORMAT] = ["json", "plain"]

_ALLOWED_KINDS: dict[COMMAND, set[INPUT_KIND]] = {
    "variance": {"moments", "moments-variance", "samples"},
    "qp": {"moments", "moments-variance"},
    "oracle": {"moments", "moments-variance", "samples"},
    "estimate": {"samples"},
}

_CSV_COLUMNS: dict[INPUT_KIND, list[str]] = {
    "moments": ["label", "mean", "second_moment"],
    "moments-variance": ["label", "mean", "variance"],
    "samples": ["label", "value"],
}


def _cast_command(command: str) -> COMMAND:
    if command == "variance":
        return "variance"
    elif command == "qp":
        return "qp"
    elif command == "oracle":
        return "oracle"
    elif command == "estimate":
        return "estimate"
    else:
        raise ValueError(f"Invalid command: {command}")


def _cast_input_kind(kind: str) -> INPUT_KIND:
    if kind == "moments":
        return "moments"
    elif kind == "moments-variance":
        return "moments-variance"
    elif kind == "samples":
        return "samples"
    else:
        raise ValueError(f"Invalid input kind: {kind}")


def _cast_output_format(output: str) -> OUTPUT_FORMAT:
    if output == "json":
        return "json"
    elif output == "plain":
        return "plain"
    else:
        raise ValueError(f"Invalid output format: {output}")


class ParseError(ValidationError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class RunRequest:
    command: COMMAND
    input_path: str
    input_kind: INPUT_KIND
    tolerances: OracleConfig = OracleConfig()
    output: OUTPUT_FORMAT = "json"

    def __post_init__(self) -> None:
        if self.input_kind not in _ALLOWED_KINDS[self.command]:
            raise ValidationError(
                f"'{self.command}' does not accept '{self.input_kind}' input"
            )


def read_csv_table(data: bytes, kind: INPUT_KIND) -> pl.DataFrame:
    try:
        data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(data.count(b"\n", 0, e.start) + 1, "input is not UTF-8")

    try:
        df = pl.read_csv(data, infer_schema=False)
    except pl.exceptions.PolarsError as e:
        raise ParseError(1, f"unreadable CSV ({e})")

    expected = _CSV_COLUMNS[kind]
    if df.columns != expected:
        raise ParseError(1, f"expected header '{','.join(expected)}'")

    numeric = expected[1:]
    parsed = df.with_row_index("line", offset=2).with_columns(
        pl.col(name).str.strip_chars().cast(pl.Float64, strict=False).alias(name)
        for name in numeric
    )

    bad_label = parsed.filter(pl.col("label").is_null())
    if not bad_label.is_empty():
        raise ParseError(bad_label.item(0, "line"), "missing label")

    for name in numeric:
        bad = parsed.filter(pl.col(name).is_null())
        if not bad.is_empty():
            label = bad.item(0, "label")
            raise ParseError(bad.item(0, "line"), f"bad {name} for '{label}'")

    return parsed.drop("line")


def _moment_set_from_table(df: pl.DataFrame, kind: INPUT_KIND) -> MomentSet:
    if kind == "samples":
        return estimate_moments(SampleTable(df.select(pl.col(SAMPLE_SCHEMA.names()))))

    entries = []
    for row in df.iter_rows(named=True):
        if kind == "moments":
            second_moment = row["second_moment"]
        else:
            second_moment = row["variance"] + row["mean"] ** 2
        entries.append(
            MomentEntry(
                label=row["label"], mean=row["mean"], second_moment=second_moment
            )
        )
    return build_moment_set(entries)


def _load_moment_set(req: RunRequest) -> MomentSet:
    with click.open_file(req.input_path, "rb") as f:
        data = f.read()
    return _moment_set_from_table(read_csv_table(data, req.input_kind), req.input_kind)


def _format_float(x: float) -> str:
    assert math.isfinite(x), x
    text = f"{x:.17g}"
    if not any(c in text for c in ".e"):
        text += ".0"
    return text


def dumps(obj: Any) -> str:
    """JSON with insertion-ordered keys and 17 significant digit floats."""
    if isinstance(obj, dict):
        items = ", ".join(f"{dumps(str(k))}: {dumps(v)}" for k, v in obj.items())
        return "{" + items + "}"
    elif isinstance(obj, list | tuple):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    elif isinstance(obj, float):
        return _format_float(obj)
    else:
        return json.dumps(obj, ensure_ascii=False)


def _witness_dict(witness: Witness, labels: tuple[str, ...]) -> dict[str, Any]:
    if isinstance(witness, Single):
        return {"kind": "single", "labels": [labels[witness.index]]}
    return {"kind": "pair", "labels": [labels[witness.first], labels[witness.second]]}


def _report_dict(
    upper: float,
    lower: float,
    mu_star: float,
    labels: tuple[str, ...],
    weights: tuple[float, ...],
    witness: dict[str, Any],
    shift_applied: float,
) -> dict[str, Any]:
    return {
        "upper_variance": upper,
        "lower_variance": lower,
        "mu_star": mu_star,
        "lambda_star": [
            {"label": label, "weight": weight} for label, weight in zip(labels, weights)
        ],
        "witness": witness,
        "shift_applied": shift_applied,
    }


def _variance(req: RunRequest) -> dict[str, Any]:
    ms = _load_moment_set(req)
    report = upper_variance(ms)
    witness = ms.input_witness(report.witness)
    log(f"K={len(ms)} witness={witness}")
    return _report_dict(
        upper=report.upper_variance,
        lower=report.lower_variance,
        mu_star=report.mu_star,
        labels=ms.input_labels,
        weights=ms.to_input_order(report.lambda_star).weights,
        witness=_witness_dict(witness, ms.input_labels),
        shift_applied=0.0,
    )


def _qp(req: RunRequest) -> dict[str, Any]:
    ms = _load_moment_set(req)
    inst = QpInstance.from_moment_set(ms)
    solution = solve(inst)
    log(
        f"K={len(inst)} witness={solution.witness} "
        f"probabilistic={solution.probabilistic}"
    )
    labels = ms.input_labels
    return _report_dict(
        upper=solution.value,
        lower=min(k - m * m for m, k in zip(inst.mu, inst.kappa)),
        mu_star=math.fsum(w * m for w, m in zip(solution.lambda_star.weights, inst.mu)),
        labels=labels,
        weights=solution.lambda_star.weights,
        witness=_witness_dict(solution.witness, labels),
        shift_applied=solution.shift_applied,
    )


def _oracle(req: RunRequest) -> dict[str, Any]:
    ms = _load_moment_set(req)
    minimax = minimax_oracle(ms, req.tolerances)

    grid: dict[str, Any] | None = None
    if len(ms) > req.tolerances.max_k_grid:
        warn(
            f"grid search skipped for K={len(ms)} "
            f"(limit {req.tolerances.max_k_grid})",
            GridSkippedWarning,
        )
    else:
        inst = QpInstance.from_moment_set(ms)
        result = simplex_grid(inst, req.tolerances)
        grid = {
            "value": result.value,
            "lambda": [
                {"label": label, "weight": weight}
                for label, weight in zip(ms.input_labels, result.weights.weights)
            ],
            "lipschitz_bound": result.lipschitz_bound,
            "grid_n": req.tolerances.grid_n,
        }

    return {
        "minimax": {"value": minimax.value, "mu_star": minimax.mu_star},
        "grid": grid,
    }


def moments_frame(ms: MomentSet) -> pl.DataFrame:
    return pl.DataFrame(
        {
            "label": list(ms.labels),
            "mean": ms.means,
            "second_moment": ms.second_moments,
            "variance": ms.variances,
        },
        schema={
            "label": pl.Utf8,
            "mean": pl.Float64,
            "second_moment": pl.Float64,
            "variance": pl.Float64,
        },
    )


def _step_summary(text: str) -> None:
    if "GITHUB_STEP_SUMMARY" in os.environ:
        with open(os.environ["GITHUB_STEP_SUMMARY"], "a") as f:
            print(text, file=f)
    else:
        log(text)


def describe_moments(df: pl.DataFrame, source: str) -> str:
    with pl.Config() as cfg:
        cfg.set_fmt_str_lengths(100)
        cfg.set_tbl_cols(-1)
        cfg.set_tbl_formatting("ASCII_MARKDOWN")
        cfg.set_tbl_hide_dataframe_shape(True)
        cfg.set_tbl_rows(-1)
        cfg.set_float_precision(6)
        return f"## {source}\n{df}\n\nregimes: {len(df):,}"


def _estimate(req: RunRequest) -> dict[str, Any]:
    ms = _load_moment_set(req)
    df = moments_frame(ms)
    _step_summary(describe_moments(df, source=req.input_path))
    return {"moments": df.to_dicts()}


def _plain(command: COMMAND, report: dict[str, Any]) -> str:
    if command == "estimate":
        lines = ["label,mean,second_moment"]
        for row in report["moments"]:
            mean = _format_float(row["mean"])
            second_moment = _format_float(row["second_moment"])
            lines.append(f"{row['label']},{mean},{second_moment}")
        return "\n".join(lines)

    def flatten(prefix: str, value: Any) -> list[str]:
        if isinstance(value, dict):
            return [
                line
                for k, v in value.items()
                for line in flatten(f"{prefix}.{k}" if prefix else k, v)
            ]
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            if "weight" in value[0]:
                return [f"{prefix}.{v['label']}: {dumps(v['weight'])}" for v in value]
            return [line for v in value for line in flatten(prefix, v)]
        elif isinstance(value, list):
            return [f"{prefix}: {' '.join(str(v) for v in value)}"]
        elif isinstance(value, float) or value is None:
            return [f"{prefix}: {dumps(value)}"]
        else:
            return [f"{prefix}: {value}"]

    return "\n".join(flatten("", report))


_HANDLERS = {
    "variance": _variance,
    "qp": _qp,
    "oracle": _oracle,
    "estimate": _estimate,
}


def run(req: RunRequest) -> tuple[int, str]:
    try:
        with log_group(f"{req.command} {req.input_path}"):
            report = _HANDLERS[req.command](req)
    except ValidationError as e:
        print_error(type(e).__name__, str(e))
        return 2, ""
    except OSError as e:
        print_error("InputError", str(e))
        return 2, ""
    except InvariantViolation as e:
        print_error("InvariantViolation", str(e))
        return 1, ""

    if req.output == "json":
        return 0, dumps(report)
    else:
        return 0, _plain(req.command, report)


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("command", type=click.Choice(_COMMANDS))
@click.option(
    "--input",
    "input_path",
    default="-",
    show_default=True,
    help="CSV file, or - for standard input.",
)
@click.option(
    "--kind",
    type=click.Choice(_INPUT_KINDS),
    default=None,
    help="Input format; samples for estimate, moments otherwise.",
)
@click.option("--output", type=click.Choice(_OUTPUT_FORMATS), default="json")
@click.option("--grid-n", type=int, default=OracleConfig.grid_n, show_default=True)
@click.option("--tol-mu", type=float, default=OracleConfig.tol_mu, show_default=True)
@click.option(
    "--max-k-grid",
    type=int,
    default=OracleConfig.max_k_grid,
    envvar="UVAR_MAX_K_GRID",
    show_envvar=True,
    show_default=True,
)
def main(
    command: str,
    input_path: str,
    kind: str | None,
    output: str,
    grid_n: int,
    tol_mu: float,
    max_k_grid: int,
) -> None:
    cmd = _cast_command(command)
    if kind is None:
        kind = "samples" if cmd == "estimate" else "moments"

    try:
        req = RunRequest(
            command=cmd,
            input_path=input_path,
            input_kind=_cast_input_kind(kind),
            tolerances=OracleConfig(
                tol_mu=tol_mu, grid_n=grid_n, max_k_grid=max_k_grid
            ),
            output=_cast_output_format(output),
        )
    except ValidationError as e:
        raise click.UsageError(str(e))

    code, text = run(req)
    if text:
        click.echo(text)
    sys.exit(code)


if __name__ == "__main__":
    main()
