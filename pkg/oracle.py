import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from tqdm import tqdm

from model import (
    KTooLargeForGrid,
    MixtureWeights,
    MomentSet,
    ValidationError,
    checked_variances,
    mean_interval,
    objective_rows,
)
from qp import QpInstance

IntArray = npt.NDArray[np.int64]

_PROGRESS_MIN_POINTS = 5_000_000


@dataclass(frozen=True)
class OracleConfig:
    tol_mu: float = 1e-12
    grid_n: int = 200
    max_k_grid: int = 5

    def __post_init__(self) -> None:
        if not (math.isfinite(self.tol_mu) and self.tol_mu > 0):
            raise ValidationError(f"tol_mu must be positive, got {self.tol_mu!r}")
        if self.grid_n < 1:
            raise ValidationError(f"grid_n must be at least 1, got {self.grid_n}")
        if self.max_k_grid < 1:
            raise ValidationError(
                f"max_k_grid must be at least 1, got {self.max_k_grid}"
            )


class MinimaxResult(NamedTuple):
    value: float
    mu_star: float


class GridResult(NamedTuple):
    value: float
    weights: MixtureWeights
    lipschitz_bound: float


def ternary_iterations(width: float, tol_mu: float) -> int:
    if width <= tol_mu:
        return 0
    return math.ceil(math.log(width / tol_mu) / math.log(1.5)) + 1


def minimax_oracle(ms: MomentSet, cfg: OracleConfig = OracleConfig()) -> MinimaxResult:
    """Minimise max_i E_i[(X − μ)²] over the mean interval by ternary search."""
    checked_variances(ms)
    means = [e.mean for e in ms.entries]
    second_moments = [e.second_moment for e in ms.entries]

    def g(mu: float) -> float:
        return max(mu * mu - 2.0 * m * mu + k for m, k in zip(means, second_moments))

    interval = mean_interval(ms)
    lo, hi = interval.lower, interval.upper
    for _ in range(ternary_iterations(hi - lo, cfg.tol_mu)):
        if hi - lo <= cfg.tol_mu:
            break
        third = (hi - lo) / 3.0
        left, right = lo + third, hi - third
        if g(left) < g(right):
            hi = right
        else:
            lo = left

    mu = (lo + hi) / 2.0
    return MinimaxResult(value=g(mu), mu_star=mu)


def compositions(total: int, parts: int) -> IntArray:
    """Nonnegative integer vectors of length `parts` summing to `total`, lex order."""
    assert parts >= 1 and total >= 0
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    if parts == 2:
        first = np.arange(total + 1, dtype=np.int64)
        return np.column_stack([first, total - first])
    blocks = []
    for first in range(total + 1):
        rest = compositions(total - first, parts - 1)
        blocks.append(
            np.column_stack([np.full(len(rest), first, dtype=np.int64), rest])
        )
    return np.concatenate(blocks)


def lipschitz_bound(inst: QpInstance) -> float:
    return 2.0 * (max(abs(k) for k in inst.kappa) + max(m * m for m in inst.mu))


def simplex_grid(inst: QpInstance, cfg: OracleConfig = OracleConfig()) -> GridResult:
    k = len(inst)
    if k > cfg.max_k_grid:
        raise KTooLargeForGrid(k, cfg.max_k_grid)

    n = cfg.grid_n
    mu = np.array(inst.mu, dtype=np.float64)
    kappa = np.array(inst.kappa, dtype=np.float64)

    if k == 1:
        best_point = np.array([n], dtype=np.int64)
        best_value = float(objective_rows(best_point / n, mu, kappa)[0])
    else:
        best_value = -math.inf
        best_point = np.zeros(k, dtype=np.int64)
        points = math.comb(n + k - 1, k - 1)
        for first in tqdm(
            range(n + 1),
            unit="slice",
            leave=False,
            disable=points < _PROGRESS_MIN_POINTS,
        ):
            rest = compositions(n - first, k - 1)
            block = np.column_stack([np.full(len(rest), first, dtype=np.int64), rest])
            values = objective_rows(block / n, mu, kappa)
            arg = int(np.argmax(values))
            if values[arg] > best_value:
                best_value = float(values[arg])
                best_point = block[arg]

    weights = MixtureWeights(tuple(float(c) / n for c in best_point))
    return GridResult(
        value=best_value,
        weights=weights,
        lipschitz_bound=lipschitz_bound(inst),
    )
