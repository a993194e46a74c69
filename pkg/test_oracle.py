import math

import numpy as np
import pytest

from model import (
    KTooLargeForGrid,
    MomentEntry,
    NegativeVariance,
    ValidationError,
    build_moment_set,
)
from oracle import (
    OracleConfig,
    compositions,
    lipschitz_bound,
    minimax_oracle,
    simplex_grid,
    ternary_iterations,
)
from qp import QpInstance, solve

BULL_BEAR = build_moment_set(
    [MomentEntry("bull", 0.1, 0.41), MomentEntry("bear", -0.1, 0.41)]
)


def test_oracle_config() -> None:
    cfg = OracleConfig()
    assert (cfg.tol_mu, cfg.grid_n, cfg.max_k_grid) == (1e-12, 200, 5)

    with pytest.raises(ValidationError):
        OracleConfig(tol_mu=0.0)
    with pytest.raises(ValidationError):
        OracleConfig(tol_mu=math.nan)
    with pytest.raises(ValidationError):
        OracleConfig(grid_n=0)
    with pytest.raises(ValidationError):
        OracleConfig(max_k_grid=0)


def test_ternary_iterations() -> None:
    assert ternary_iterations(0.0, 1e-12) == 0
    assert ternary_iterations(1.0, 1e-12) == 70
    assert ternary_iterations(1.0, 1.0) == 0
    assert ternary_iterations(20.0, 1e-12) > ternary_iterations(1.0, 1e-12)


def test_minimax_oracle() -> None:
    result = minimax_oracle(BULL_BEAR)
    assert result.value == pytest.approx(0.41, abs=1e-9)
    assert result.mu_star == pytest.approx(0.0, abs=1e-9)

    single = build_moment_set([MomentEntry("a", 3.0, 13.0)])
    assert minimax_oracle(single) == (4.0, 3.0)

    dominated = build_moment_set(
        [MomentEntry("a", 0.0, 1.0), MomentEntry("b", 0.05, 0.1)]
    )
    assert minimax_oracle(dominated).value == pytest.approx(1.0, abs=1e-9)

    with pytest.raises(NegativeVariance):
        minimax_oracle(build_moment_set([MomentEntry("a", 1.0, 0.0)]))


def test_minimax_oracle_deterministic() -> None:
    ms = build_moment_set(
        [
            MomentEntry("a", -1.0, 1.5),
            MomentEntry("b", 0.0, 0.5),
            MomentEntry("c", 1.0, 1.5),
        ]
    )
    first = minimax_oracle(ms)
    assert first == minimax_oracle(ms)
    assert first.value == pytest.approx(1.5, abs=1e-9)

    coarse = minimax_oracle(ms, OracleConfig(tol_mu=1e-3))
    assert coarse.value == pytest.approx(1.5, abs=1e-2)


def test_compositions() -> None:
    assert compositions(2, 3).tolist() == [
        [0, 0, 2],
        [0, 1, 1],
        [0, 2, 0],
        [1, 0, 1],
        [1, 1, 0],
        [2, 0, 0],
    ]
    assert compositions(3, 1).tolist() == [[3]]
    assert compositions(0, 2).tolist() == [[0, 0]]

    points = compositions(10, 4)
    assert len(points) == math.comb(13, 3)
    assert (points.sum(axis=1) == 10).all()
    assert (points >= 0).all()


def test_lipschitz_bound() -> None:
    inst = QpInstance.of([0.1, -0.1], [0.41, 0.41])
    assert lipschitz_bound(inst) == pytest.approx(0.84)
    assert lipschitz_bound(QpInstance.of([2.0], [-5.0])) == 18.0


def test_simplex_grid() -> None:
    inst = QpInstance.of([0.1, -0.1], [0.41, 0.41])
    result = simplex_grid(inst, OracleConfig(grid_n=2))
    assert result.value == pytest.approx(0.41, abs=1e-12)
    assert result.weights.weights == (0.5, 0.5)
    assert result.lipschitz_bound == pytest.approx(0.84)

    result = simplex_grid(QpInstance.of([3.0], [13.0]))
    assert result.value == 4.0
    assert result.weights.weights == (1.0,)

    inst = QpInstance.of([0.0, 0.05], [1.0, 0.1])
    result = simplex_grid(inst, OracleConfig(grid_n=20))
    assert result.value == 1.0
    assert result.weights.weights == (1.0, 0.0)


def test_simplex_grid_deterministic() -> None:
    inst = QpInstance.of([-1.0, 0.5, 2.0], [3.0, 1.0, 6.0])
    cfg = OracleConfig(grid_n=50)
    assert simplex_grid(inst, cfg) == simplex_grid(inst, cfg)


def test_simplex_grid_refuses_large_k() -> None:
    inst = QpInstance.of([0.0] * 6, [1.0] * 6)
    with pytest.raises(KTooLargeForGrid) as excinfo:
        simplex_grid(inst)
    assert excinfo.value.k == 6

    result = simplex_grid(inst, OracleConfig(grid_n=3, max_k_grid=6))
    assert result.value == pytest.approx(1.0)


# K=4 runs at n=200 (C(2003, 3) points is too many at n=2000); the same L/n
# and L/(2n²) bounds are checked at that resolution
@pytest.mark.filterwarnings("ignore::actions.ShiftedInstanceWarning")
@pytest.mark.parametrize(
    "k,grid_n,count", [(2, 2000, 200), (3, 2000, 100), (4, 200, 25)]
)
def test_simplex_grid_brackets_qp(k: int, grid_n: int, count: int) -> None:
    rng = np.random.default_rng(7000 + k)
    cfg = OracleConfig(grid_n=grid_n)
    for _ in range(count):
        inst = QpInstance.of(
            rng.uniform(-3, 3, size=k).tolist(), rng.uniform(-5, 15, size=k).tolist()
        )
        exact = solve(inst).value
        result = simplex_grid(inst, cfg)
        bound = result.lipschitz_bound
        assert result.value <= exact + 1e-9
        assert result.value >= exact - bound / grid_n
        # λ* has at most two nonzeros, so an edge grid point lies within 1/(2n)
        assert result.value >= exact - bound / (2 * grid_n**2) - 1e-9


@pytest.mark.parametrize("k", [2, 3, 4])
def test_minimax_oracle_matches_qp(k: int) -> None:
    rng = np.random.default_rng(8000 + k)
    for _ in range(200):
        means = rng.uniform(-3, 3, size=k)
        variances = rng.uniform(0.1, 4, size=k)
        ms = build_moment_set(
            MomentEntry(f"m{i}", float(m), float(v + m * m))
            for i, (m, v) in enumerate(zip(means, variances))
        )
        exact = solve(QpInstance.from_moment_set(ms)).value
        assert minimax_oracle(ms).value == pytest.approx(exact, abs=1e-9)


@pytest.mark.filterwarnings("ignore::actions.ShiftedInstanceWarning")
def test_simplex_grid_matches_shifted_qp() -> None:
    inst = QpInstance.of([0, 1, 2], [-1, 0, 1])
    exact = solve(inst).value
    result = simplex_grid(inst, OracleConfig(grid_n=2000))
    assert exact - 2e-6 <= result.value <= exact + 1e-9
