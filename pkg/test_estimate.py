import numpy as np
import polars as pl
import pytest
from hypothesis import given
from hypothesis import strategies as st
from polars.testing import assert_frame_equal

from estimate import SAMPLE_SCHEMA, SampleTable, estimate_moments, sample_moments
from model import EmptyInput, GroupTooSmall, NonFiniteValue


def _table(groups: dict[str, list[float]]) -> SampleTable:
    frame = pl.DataFrame(
        {
            "label": [label for label, values in groups.items() for _ in values],
            "value": [float(v) for values in groups.values() for v in values],
        },
        schema=SAMPLE_SCHEMA,
    )
    return SampleTable(frame)


def _st_sample() -> st.SearchStrategy[list[float]]:
    return st.lists(st.floats(min_value=-100, max_value=100), min_size=2, max_size=20)


def test_estimate_moments() -> None:
    ms = estimate_moments(_table({"a": [1, 1, 1]}))
    (entry,) = ms.entries
    assert (entry.label, entry.mean, entry.second_moment) == ("a", 1.0, 1.0)

    ms = estimate_moments(_table({"a": [0, 2]}))
    (entry,) = ms.entries
    assert (entry.mean, entry.variance, entry.second_moment) == (1.0, 2.0, 3.0)


def test_estimate_moments_sorted_by_mean() -> None:
    table = _table(
        {
            "bull": [0.2, 0.0, 0.1, 0.3],
            "bear": [-0.2, 0.0, -0.1],
            "flat": [0.0, 0.0],
        }
    )
    ms = estimate_moments(table)
    assert ms.labels == ("bear", "flat", "bull")
    assert ms.input_labels == ("bull", "bear", "flat")


def test_sample_moments() -> None:
    table = _table({"b": [3, 5], "a": [0, 2, 4]})
    df = sample_moments(table)
    expected = pl.DataFrame(
        {
            "label": ["b", "a"],
            "n": [2, 3],
            "mean": [4.0, 2.0],
            "variance": [2.0, 4.0],
        },
        schema={
            "label": pl.Utf8,
            "n": pl.UInt32,
            "mean": pl.Float64,
            "variance": pl.Float64,
        },
    )
    assert_frame_equal(df, expected)


def test_estimate_matches_two_pass_reference() -> None:
    rng = np.random.default_rng(20240611)
    draws = rng.normal(loc=0.05, scale=1.3, size=1000)
    ms = estimate_moments(_table({"a": draws.tolist()}))

    mean = float(np.sum(draws) / len(draws))
    variance = float(np.sum((draws - mean) ** 2) / (len(draws) - 1))

    (entry,) = ms.entries
    assert entry.mean == pytest.approx(mean, rel=1e-12)
    assert entry.second_moment == pytest.approx(variance + mean**2, rel=1e-12)


def test_estimate_adversarial_offset() -> None:
    ms = estimate_moments(_table({"a": [1e8, 1e8 + 1, 1e8 + 2]}))
    (entry,) = ms.entries
    assert entry.mean == 1e8 + 1
    variance = sample_moments(
        _table({"a": [1e8, 1e8 + 1, 1e8 + 2]})
    ).item(0, "variance")
    assert variance == pytest.approx(1.0, rel=1e-9)


def test_estimate_errors() -> None:
    with pytest.raises(GroupTooSmall) as excinfo:
        estimate_moments(_table({"a": [1, 2], "b": [3]}))
    assert (excinfo.value.label, excinfo.value.n) == ("b", 1)

    with pytest.raises(NonFiniteValue) as nonfinite:
        _table({"a": [1.0, 2.0], "b": [float("nan"), 1.0]})
    assert nonfinite.value.label == "b"

    with pytest.raises(EmptyInput):
        _table({})


@given(sample=_st_sample(), shift=st.floats(min_value=-50, max_value=50))
def test_estimate_shift_equivariance(sample: list[float], shift: float) -> None:
    before = sample_moments(_table({"a": sample}))
    after = sample_moments(_table({"a": [x + shift for x in sample]}))

    mean = before.item(0, "mean")
    variance = before.item(0, "variance")
    assert after.item(0, "mean") == pytest.approx(mean + shift, rel=1e-9, abs=1e-9)
    assert after.item(0, "variance") == pytest.approx(variance, rel=1e-9, abs=1e-9)


@given(sample=_st_sample(), scale=st.floats(min_value=-5, max_value=5))
def test_estimate_scale_equivariance(sample: list[float], scale: float) -> None:
    before = sample_moments(_table({"a": sample}))
    after = sample_moments(_table({"a": [scale * x for x in sample]}))

    mean = before.item(0, "mean")
    variance = before.item(0, "variance")
    assert after.item(0, "mean") == pytest.approx(scale * mean, rel=1e-9, abs=1e-9)
    assert after.item(0, "variance") == pytest.approx(
        scale**2 * variance, rel=1e-9, abs=1e-9
    )
