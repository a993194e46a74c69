from dataclasses import dataclass

import polars as pl

from model import (
    EmptyInput,
    GroupTooSmall,
    MomentEntry,
    MomentSet,
    NonFiniteValue,
    build_moment_set,
)

SAMPLE_SCHEMA = pl.Schema({"label": pl.Utf8, "value": pl.Float64})

MOMENTS_SCHEMA = pl.Schema(
    {
        "label": pl.Utf8,
        "n": pl.UInt32,
        "mean": pl.Float64,
        "variance": pl.Float64,
    }
)


@dataclass(frozen=True)
class SampleTable:
    """Long-format observations, one row per (label, value)."""

    frame: pl.DataFrame

    def __post_init__(self) -> None:
        assert self.frame.schema == SAMPLE_SCHEMA, "unexpected sample schema"
        if self.frame.is_empty():
            raise EmptyInput("sample table")

        bad = self.frame.filter(
            pl.col("value").is_null() | pl.col("value").is_finite().not_()
        )
        if not bad.is_empty():
            raise NonFiniteValue(bad.item(0, "label"))


def _group_moments(frame: pl.DataFrame) -> pl.DataFrame:
    # two passes: center on the group mean before squaring
    return (
        frame.lazy()
        .with_columns(
            (pl.col("value").sum() / pl.len()).over("label").alias("group_mean"),
        )
        .group_by("label", maintain_order=True)
        .agg(
            pl.len().alias("n"),
            pl.col("group_mean").first().alias("mean"),
            (pl.col("value") - pl.col("group_mean")).pow(2).sum().alias("ss"),
        )
        .select(
            pl.col("label"),
            pl.col("n"),
            pl.col("mean"),
            (pl.col("ss") / (pl.col("n").cast(pl.Float64) - 1.0)).alias("variance"),
        )
        .collect()
    )


def sample_moments(table: SampleTable) -> pl.DataFrame:
    df = _group_moments(table.frame)
    assert df.schema == MOMENTS_SCHEMA, df.schema

    small = df.filter(pl.col("n") < 2)
    if not small.is_empty():
        raise GroupTooSmall(small.item(0, "label"), small.item(0, "n"))

    return df


def estimate_moments(table: SampleTable) -> MomentSet:
    df = sample_moments(table)
    return build_moment_set(
        MomentEntry(
            label=row["label"],
            mean=row["mean"],
            second_moment=row["variance"] + row["mean"] ** 2,
        )
        for row in df.iter_rows(named=True)
    )
