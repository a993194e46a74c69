import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from actions import ZeroVarianceWarning, warn

FloatArray = npt.NDArray[np.float64]

WEIGHT_SUM_TOL = 1e-12
NEGATIVE_VARIANCE_TOL = 1e-12


class ValidationError(ValueError):
    pass


class EmptyInput(ValidationError):
    def __init__(self, what: str = "input") -> None:
        super().__init__(f"{what} is empty")


class NonFiniteValue(ValidationError):
    def __init__(self, label: str) -> None:
        super().__init__(f"non-finite value for '{label}'")
        self.label = label


class DuplicateLabel(ValidationError):
    def __init__(self, label: str) -> None:
        super().__init__(f"duplicate label '{label}'")
        self.label = label


class GroupTooSmall(ValidationError):
    def __init__(self, label: str, n: int) -> None:
        super().__init__(f"group '{label}' has {n} observation(s), need at least 2")
        self.label = label
        self.n = n


class NegativeVariance(ValidationError):
    def __init__(self, label: str, variance: float) -> None:
        super().__init__(f"negative variance {variance!r} for '{label}'")
        self.label = label


class IndexOutOfRange(ValidationError):
    def __init__(self, index: int, size: int) -> None:
        super().__init__(f"index {index} out of range for {size} entries")
        self.index = index


class KTooLargeForGrid(ValidationError):
    def __init__(self, k: int, limit: int) -> None:
        super().__init__(f"grid search refused for K={k} (limit {limit})")
        self.k = k


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class MomentEntry:
    label: str
    mean: float
    second_moment: float

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean * self.mean


@dataclass(frozen=True)
class MeanInterval:
    lower: float
    upper: float

    def __contains__(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class MomentSet:
    """Entries sorted by mean; ``order[k]`` is the input position of ``entries[k]``."""

    entries: tuple[MomentEntry, ...]
    order: tuple[int, ...]

    def __post_init__(self) -> None:
        assert len(self.entries) >= 1, "empty moment set"
        assert len(self.order) == len(self.entries)
        assert sorted(self.order) == list(range(len(self.order)))
        assert all(
            a.mean <= b.mean for a, b in zip(self.entries, self.entries[1:])
        ), "entries not sorted by mean"

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.entries)

    @property
    def means(self) -> FloatArray:
        return np.array([e.mean for e in self.entries], dtype=np.float64)

    @property
    def second_moments(self) -> FloatArray:
        return np.array([e.second_moment for e in self.entries], dtype=np.float64)

    @property
    def variances(self) -> FloatArray:
        return self.second_moments - self.means**2

    @property
    def input_labels(self) -> tuple[str, ...]:
        labels = [""] * len(self)
        for position, entry in zip(self.order, self.entries):
            labels[position] = entry.label
        return tuple(labels)

    def input_index(self, sorted_index: int) -> int:
        return self.order[sorted_index]

    def input_witness(self, witness: "Witness") -> "Witness":
        if isinstance(witness, Single):
            return Single(self.input_index(witness.index))
        first, second = sorted(
            (self.input_index(witness.first), self.input_index(witness.second))
        )
        return Pair(first, second)

    def to_input_order(self, weights: "MixtureWeights") -> "MixtureWeights":
        assert len(weights) == len(self)
        values = [0.0] * len(self)
        for position, weight in zip(self.order, weights.weights):
            values[position] = weight
        return MixtureWeights(tuple(values))


@dataclass(frozen=True)
class MixtureWeights:
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.weights:
            raise EmptyInput("weights")
        for w in self.weights:
            if not 0.0 <= w <= 1.0:
                raise ValidationError(f"weight {w!r} outside [0, 1]")
        total = math.fsum(self.weights)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"weights sum to {total!r}, not 1")

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def unit(cls, size: int, index: int) -> "MixtureWeights":
        if not 0 <= index < size:
            raise IndexOutOfRange(index, size)
        return cls(tuple(1.0 if k == index else 0.0 for k in range(size)))

    def as_array(self) -> FloatArray:
        return np.array(self.weights, dtype=np.float64)

    def nonzero_count(self) -> int:
        return sum(1 for w in self.weights if w != 0.0)


@dataclass(frozen=True)
class Single:
    index: int


@dataclass(frozen=True)
class Pair:
    first: int
    second: int


Witness = Single | Pair


@dataclass(frozen=True)
class VarianceReport:
    upper_variance: float
    lower_variance: float
    mu_star: float
    lambda_star: MixtureWeights
    witness: Witness


def build_moment_set(entries: Iterable[MomentEntry]) -> MomentSet:
    entries = list(entries)
    if not entries:
        raise EmptyInput("moment entries")

    seen: set[str] = set()
    for entry in entries:
        if not entry.label:
            raise ValidationError("label must be non-empty")
        if not (math.isfinite(entry.mean) and math.isfinite(entry.second_moment)):
            raise NonFiniteValue(entry.label)
        if entry.label in seen:
            raise DuplicateLabel(entry.label)
        seen.add(entry.label)

    # sorted() is stable, ties keep input order
    order = sorted(range(len(entries)), key=lambda k: entries[k].mean)
    return MomentSet(
        entries=tuple(entries[k] for k in order),
        order=tuple(order),
    )


def mean_interval(ms: MomentSet) -> MeanInterval:
    return MeanInterval(lower=ms.entries[0].mean, upper=ms.entries[-1].mean)


def affine_transform(ms: MomentSet, a: float, b: float) -> MomentSet:
    if not (math.isfinite(a) and math.isfinite(b)):
        raise NonFiniteValue("affine coefficients")

    transformed = [
        MomentEntry(
            label=e.label,
            mean=a * e.mean + b,
            second_moment=a * a * e.second_moment + 2.0 * a * b * e.mean + b * b,
        )
        for e in ms.entries
    ]
    for entry in transformed:
        if not (math.isfinite(entry.mean) and math.isfinite(entry.second_moment)):
            raise NonFiniteValue(entry.label)

    resorted = sorted(range(len(transformed)), key=lambda k: transformed[k].mean)
    return MomentSet(
        entries=tuple(transformed[k] for k in resorted),
        order=tuple(ms.order[k] for k in resorted),
    )


def checked_variances(ms: MomentSet) -> list[float]:
    variances: list[float] = []
    for entry in ms.entries:
        variance = entry.variance
        if variance < 0.0:
            if variance < -NEGATIVE_VARIANCE_TOL * max(1.0, abs(entry.second_moment)):
                raise NegativeVariance(entry.label, variance)
            warn(
                f"variance {variance!r} for '{entry.label}' treated as zero",
                ZeroVarianceWarning,
            )
            variance = 0.0
        variances.append(variance)
    return variances


def objective_rows(
    weights: npt.ArrayLike,
    means: Sequence[float] | FloatArray,
    second_moments: Sequence[float] | FloatArray,
) -> FloatArray:
    """Variance of each mixture row: λᵀκ − (λᵀμ)²."""
    lam = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    mixture_mean = lam @ np.asarray(means, dtype=np.float64)
    values = lam @ np.asarray(second_moments, dtype=np.float64)
    return np.asarray(values - mixture_mean * mixture_mean, dtype=np.float64)


def objective(
    weights: MixtureWeights | Sequence[float],
    means: Sequence[float] | FloatArray,
    second_moments: Sequence[float] | FloatArray,
) -> float:
    if isinstance(weights, MixtureWeights):
        lam = weights.as_array()
    else:
        lam = np.asarray(weights, dtype=np.float64)
    assert lam.ndim == 1
    return float(objective_rows(lam, means, second_moments)[0])
