import math
from collections.abc import Sequence
from dataclasses import dataclass

from actions import ShiftedInstanceWarning, warn
from exact import candidate_maximum, upper_variance, witness_center
from model import (
    EmptyInput,
    MixtureWeights,
    MomentEntry,
    MomentSet,
    NonFiniteValue,
    ValidationError,
    Witness,
    build_moment_set,
)

_SHIFT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class QpInstance:
    """max over the simplex of λᵀκ − (λᵀμ)², indices in caller order."""

    mu: tuple[float, ...]
    kappa: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.mu) != len(self.kappa):
            raise ValidationError(
                f"mu has {len(self.mu)} entries but kappa has {len(self.kappa)}"
            )
        if not self.mu:
            raise EmptyInput("qp instance")
        for k, (m, c) in enumerate(zip(self.mu, self.kappa)):
            if not (math.isfinite(m) and math.isfinite(c)):
                raise NonFiniteValue(f"index {k}")

    def __len__(self) -> int:
        return len(self.mu)

    @classmethod
    def of(cls, mu: Sequence[float], kappa: Sequence[float]) -> "QpInstance":
        return cls(tuple(float(m) for m in mu), tuple(float(c) for c in kappa))

    @classmethod
    def from_moment_set(cls, ms: MomentSet) -> "QpInstance":
        mu = [0.0] * len(ms)
        kappa = [0.0] * len(ms)
        for position, entry in zip(ms.order, ms.entries):
            mu[position] = entry.mean
            kappa[position] = entry.second_moment
        return cls.of(mu, kappa)

    def moment_set(self, shift: float = 0.0) -> MomentSet:
        return build_moment_set(
            MomentEntry(label=str(k), mean=m, second_moment=c + shift)
            for k, (m, c) in enumerate(zip(self.mu, self.kappa))
        )


@dataclass(frozen=True)
class QpSolution:
    value: float
    lambda_star: MixtureWeights
    witness: Witness
    shift_applied: float
    probabilistic: bool


def solve(inst: QpInstance) -> QpSolution:
    c = min(k - m * m for m, k in zip(inst.mu, inst.kappa))

    shift = 0.0
    if c <= _SHIFT_THRESHOLD:
        shift = -c + 1.0
        warn(
            f"min(κ − μ²) = {c!r}; solving with κ shifted by {shift!r}",
            ShiftedInstanceWarning,
        )

    ms = inst.moment_set(shift)
    report = upper_variance(ms)
    value, lambda_star = report.upper_variance, report.lambda_star

    if shift > 0.0:
        # the shift only picks the witness; value and λ* use the caller's κ
        base = inst.moment_set()
        value = candidate_maximum(base)
        _, lambda_star = witness_center(base, report.witness)

    return QpSolution(
        value=value,
        lambda_star=ms.to_input_order(lambda_star),
        witness=ms.input_witness(report.witness),
        shift_applied=shift,
        probabilistic=c > 0.0,
    )
