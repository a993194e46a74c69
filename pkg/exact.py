import math
from dataclasses import dataclass
from itertools import combinations

from model import (
    IndexOutOfRange,
    InvariantViolation,
    MixtureWeights,
    MomentSet,
    Pair,
    Single,
    VarianceReport,
    Witness,
    build_moment_set,
    checked_variances,
    objective,
)

_MEAN_EQ_TOL = 1e-12
_TIE_TOL = 1e-12
_WEIGHT_CLAMP_TOL = 1e-12
_OBJECTIVE_REL_TOL = 1e-10


@dataclass(frozen=True)
class Parabola:
    """f(μ) = μ² − 2·mean·μ + second_moment, the expected squared distance to μ."""

    index: int
    mean: float
    second_moment: float

    def __call__(self, mu: float) -> float:
        return mu * mu - 2.0 * self.mean * mu + self.second_moment

    @property
    def vertex_value(self) -> float:
        return self.second_moment - self.mean * self.mean


def parabola(ms: MomentSet, i: int) -> Parabola:
    if not 0 <= i < len(ms):
        raise IndexOutOfRange(i, len(ms))
    entry = ms.entries[i]
    return Parabola(index=i, mean=entry.mean, second_moment=entry.second_moment)


@dataclass(frozen=True)
class PairCandidate:
    i: int
    j: int
    mu_ij: float
    value: float
    interior: bool


def _means_equal(a: float, b: float) -> bool:
    return abs(b - a) <= _MEAN_EQ_TOL * max(1.0, abs(a), abs(b))


def pair_candidate(ms: MomentSet, i: int, j: int) -> PairCandidate:
    if not 0 <= i < len(ms):
        raise IndexOutOfRange(i, len(ms))
    if not i < j < len(ms):
        raise IndexOutOfRange(j, len(ms))

    f_i = parabola(ms, i)
    f_j = parabola(ms, j)

    if _means_equal(f_i.mean, f_j.mean):
        return PairCandidate(
            i=i, j=j, mu_ij=f_i.mean, value=f_i.vertex_value, interior=False
        )

    crossing = (f_j.second_moment - f_i.second_moment) / (
        2.0 * (f_j.mean - f_i.mean)
    )
    mu_ij = min(max(f_i.mean, crossing), f_j.mean)
    return PairCandidate(
        i=i,
        j=j,
        mu_ij=mu_ij,
        value=f_i(mu_ij),
        interior=mu_ij == crossing,
    )


def _envelope(ms: MomentSet, mu: float) -> float:
    return max(parabola(ms, k)(mu) for k in range(len(ms)))


def _select_witness(
    ms: MomentSet,
    singles: list[float],
    pairs: list[PairCandidate],
    upper: float,
) -> Witness:
    tol = _TIE_TOL * max(1.0, abs(upper))
    threshold = upper - tol

    # a near-tied single only wins if its mean is also a minimax center
    for index, value in enumerate(singles):
        if value == upper:
            return Single(index)
        centered = _envelope(ms, ms.entries[index].mean) <= upper + tol
        if value >= threshold and centered:
            return Single(index)

    # clamped pairs coincide with (or lie below) an endpoint single
    for candidate in pairs:
        if candidate.interior and candidate.value >= threshold:
            return Pair(candidate.i, candidate.j)

    raise InvariantViolation(f"no eligible witness attains {upper!r}")


def _pair_weights(ms: MomentSet, witness: Pair, mu_star: float) -> MixtureWeights:
    mu_i = ms.entries[witness.first].mean
    mu_j = ms.entries[witness.second].mean

    # μⱼ/(μⱼ−μᵢ) + (κᵢ−κⱼ)/(2(μᵢ−μⱼ)²) rewritten through the crossing point
    lam_i = (mu_j - mu_star) / (mu_j - mu_i)
    if not -_WEIGHT_CLAMP_TOL <= lam_i <= 1.0 + _WEIGHT_CLAMP_TOL:
        raise InvariantViolation(f"pair weight {lam_i!r} outside [0, 1]")
    lam_i = min(max(lam_i, 0.0), 1.0)

    weights = [0.0] * len(ms)
    weights[witness.first] = lam_i
    weights[witness.second] = 1.0 - lam_i
    return MixtureWeights(tuple(weights))


def _check_certificate(ms: MomentSet, report: VarianceReport) -> None:
    if report.lambda_star.nonzero_count() > 2:
        raise InvariantViolation(f"λ* has more than two atoms: {report.lambda_star}")

    value = objective(report.lambda_star, ms.means, ms.second_moments)
    scale = max(1.0, float(abs(ms.second_moments).max()))
    if not math.isclose(
        value,
        report.upper_variance,
        rel_tol=_OBJECTIVE_REL_TOL,
        abs_tol=_TIE_TOL * scale,
    ):
        raise InvariantViolation(
            f"λ* objective {value!r} disagrees with upper variance "
            f"{report.upper_variance!r}"
        )


def witness_center(ms: MomentSet, witness: Witness) -> tuple[float, MixtureWeights]:
    """μ* and λ* (sorted order) for a witness chosen on the same entries."""
    if isinstance(witness, Single):
        return ms.entries[witness.index].mean, MixtureWeights.unit(
            len(ms), witness.index
        )
    mu_star = pair_candidate(ms, witness.first, witness.second).mu_ij
    return mu_star, _pair_weights(ms, witness, mu_star)


def _pairs(ms: MomentSet) -> list[PairCandidate]:
    return [pair_candidate(ms, i, j) for i, j in combinations(range(len(ms)), 2)]


def candidate_maximum(ms: MomentSet) -> float:
    """Largest single or pair value, without the variance sign checks."""
    return max([*(e.variance for e in ms.entries), *(p.value for p in _pairs(ms))])


def upper_variance(ms: MomentSet) -> VarianceReport:
    singles = checked_variances(ms)
    pairs = _pairs(ms)

    upper = max([*singles, *(p.value for p in pairs)])
    witness = _select_witness(ms, singles, pairs, upper)
    mu_star, lambda_star = witness_center(ms, witness)

    report = VarianceReport(
        upper_variance=upper,
        lower_variance=min(singles),
        mu_star=mu_star,
        lambda_star=lambda_star,
        witness=witness,
    )
    _check_certificate(ms, report)
    return report


def lower_variance(ms: MomentSet) -> float:
    return min(checked_variances(ms))


def pairwise_upper_variance(ms: MomentSet) -> float:
    """Upper variance as the largest two-measure upper variance."""
    if len(ms) == 1:
        return upper_variance(ms).upper_variance
    return max(
        upper_variance(build_moment_set([ms.entries[i], ms.entries[j]])).upper_variance
        for i, j in combinations(range(len(ms)), 2)
    )
