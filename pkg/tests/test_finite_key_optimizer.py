"""
Test the key-length optimizer at the Table-1 operating point
"""
import numpy as np
import pytest

from app.core.errors import ValidationError
from app.schemas.security import GridPreset, OptimizerConfig, PeType, SecurityParams
from app.utils.finite_key_bounds import eps_pa
from app.utils.finite_key_optimizer import (
    candidate_key_length,
    candidate_key_lengths,
    feasibility_report,
    minimal_feasible_nu,
    nu_grid,
    optimize,
    optimize_all_bounds,
    refined_points,
)
from app.utils.precision_oracle import recompute_budget
from tests.conftest import TABLE1_PARAMS


def coarse(s: int = 6, pe: PeType = PeType.CP_EXACT, **overrides) -> OptimizerConfig:
    params = SecurityParams(**{**TABLE1_PARAMS, "s": s, **overrides})
    return OptimizerConfig.preset(params, pe, GridPreset.COARSE)


@pytest.fixture(scope="module")
def results_s6():
    config = coarse(6)
    return config, optimize_all_bounds(config)


@pytest.fixture(scope="module")
def results_s9():
    config = coarse(9)
    return config, optimize_all_bounds(config)


def test_nu_grid_bounds():
    config = coarse()
    grid = nu_grid(config)
    assert grid.size == config.nu_grid_points
    assert grid[0] == pytest.approx(config.nu_lo)
    assert grid[-1] == pytest.approx(0.5 - 0.0627 - config.nu_lo)


def test_refined_grid_contains_previous():
    """2p - 1 points keep every point of the p-point grid"""
    assert refined_points(101) == 201
    small = nu_grid(coarse().model_copy(update={"nu_grid_points": 101}))
    large = nu_grid(coarse().model_copy(update={"nu_grid_points": 201}))
    np.testing.assert_allclose(large[::2], small)


def test_candidate_key_length_is_largest_within_budget():
    """eps_pa(l) <= B < eps_pa(l + 1) for random budgets and deviations"""
    rng = np.random.default_rng(21)
    n, r, t = 10000, 5000, 27
    for _ in range(200):
        B = 10.0 ** rng.uniform(-9, -6)
        delta = rng.uniform(0.0, 0.06)
        nu = rng.uniform(0.005, 0.04)
        l = candidate_key_length(B, delta, nu, n, r, t)
        assert l is not None and l > 0
        assert eps_pa(l, t, nu, delta, r, n) <= B * (1 + 1e-9)
        assert eps_pa(l + 1, t, nu, delta, r, n) > B
        assert int(candidate_key_lengths(np.array([B]), delta, np.array([nu]), n, r, t)[0]) == l


def test_candidate_key_length_rejects_empty_budget():
    assert candidate_key_length(0.0, 0.05, 0.02, 10000, 5000, 27) is None
    assert candidate_key_length(-1e-9, 0.05, 0.02, 10000, 5000, 27) is None
    # too few bits to cover the syndrome and hash
    assert candidate_key_length(1e-7, 0.05, 0.02, 100, 5000, 27) is None
    lengths = candidate_key_lengths(np.array([-1.0, 0.0, 1e-7]), 0.05, 0.02, 10000, 5000, 27)
    assert lengths[0] == lengths[1] == 0
    assert lengths[2] == candidate_key_length(1e-7, 0.05, 0.02, 10000, 5000, 27)


def test_serfling_row_s6(results_s6):
    """nu near 0.043 and a key rate of a few per mille"""
    config, results = results_s6
    result = results[PeType.SERFLING]
    assert result.feasible
    assert 0.001 <= result.key_rate(config.params.N) <= 0.005
    assert result.nu_star == pytest.approx(0.043, abs=0.003)
    assert result.mu_star is not None and 0 < result.mu_star < result.nu_star


def test_chernoff_row_s6(results_s6):
    config, results = results_s6
    result = results[PeType.CHERNOFF]
    assert result.feasible
    assert result.key_rate(config.params.N) == pytest.approx(0.027, abs=0.004)
    assert result.mu_star is None


def test_cp_row_s6(results_s6):
    config, results = results_s6
    result = results[PeType.CP_EXACT]
    assert result.feasible
    assert 0.035 <= result.key_rate(config.params.N) <= 0.058
    assert result.nu_star < results[PeType.CHERNOFF].nu_star


def test_bound_ordering_s6(results_s6):
    """Tighter estimation bounds never give a shorter key"""
    _, results = results_s6
    serf, chern, cp = (results[pe].l_max for pe in PeType)
    assert cp >= chern >= serf > 0


def test_budgets_within_eps_qkd(results_s6):
    config, results = results_s6
    for pe, result in results.items():
        budget = result.budget
        assert budget.accepted(config.slack), pe
        assert budget.eps_auth == 2.0 ** -61
        assert budget.eps_ec == 2.0 ** -27


def test_high_precision_recompute(results_s6):
    """Stored witnesses reproduce an accepted budget at 200 bits"""
    config, results = results_s6
    for pe in (PeType.SERFLING, PeType.CP_EXACT):
        result = results[pe]
        budget = recompute_budget(result, config.model_copy(update={"pe_type": pe}))
        assert budget.eps_pa == pytest.approx(result.budget.eps_pa, rel=1e-9)
        assert budget.eps_total <= budget.eps_qkd * (1 + 1e-6)


def test_s9_rows(results_s9):
    """At s=9 Serfling yields no key while Chernoff and CP still do"""
    config, results = results_s9
    N = config.params.N
    assert not results[PeType.SERFLING].feasible
    assert 0.012 <= results[PeType.CHERNOFF].key_rate(N) <= 0.022
    assert 0.025 <= results[PeType.CP_EXACT].key_rate(N) <= 0.05


def test_infeasible_result_has_diagnostics(results_s9):
    config, results = results_s9
    result = results[PeType.SERFLING]
    assert result.l_max is None
    assert result.nu_star is None
    assert result.key_rate(config.params.N) == 0.0
    report = feasibility_report(result)
    assert report["n_points"] == config.nu_grid_points * config.mu_grid_points
    assert report["accepted"] == 0.0
    for key in ("eps_auth", "eps_ec", "eps_pe", "margin", "max_B"):
        assert key in report


def test_minimal_feasible_nu_ordering():
    """nu_CP <= nu_Chern <= nu_Serf over a delta grid"""
    for delta in np.linspace(0.02, 0.09, 5):
        nus = {pe: minimal_feasible_nu(coarse(pe=pe, delta=float(delta))) for pe in PeType}
        assert nus[PeType.CP_EXACT] is not None
        assert nus[PeType.CHERNOFF] is not None
        assert nus[PeType.CP_EXACT] <= nus[PeType.CHERNOFF]
        if nus[PeType.SERFLING] is not None:
            assert nus[PeType.CHERNOFF] <= nus[PeType.SERFLING]


def test_refinement_never_shortens_key():
    base = coarse(pe=PeType.CHERNOFF).model_copy(update={"nu_grid_points": 201})
    refined = base.model_copy(update={"nu_grid_points": refined_points(201)})
    assert optimize(refined).l_max >= optimize(base).l_max


def test_workers_do_not_change_result():
    config = coarse().model_copy(update={"nu_grid_points": 500, "chunk": 64})
    single = optimize(config)
    parallel = optimize(config.model_copy(update={"workers": 3}))
    assert parallel.l_max == single.l_max
    assert parallel.nu_star == single.nu_star


def test_optimizer_requires_half_sample():
    with pytest.raises(ValidationError):
        optimize(coarse(n=8000))


def test_delta_above_threshold_rejected():
    with pytest.raises(ValueError):
        coarse(delta=0.2)


@pytest.mark.slow
def test_full_grid_matches_coarse_nu():
    """The full grid lands within one coarse step of the coarse optimum"""
    coarse_config = coarse(pe=PeType.CHERNOFF)
    full_config = OptimizerConfig.preset(coarse_config.params, PeType.CHERNOFF, GridPreset.FULL)
    coarse_result = optimize(coarse_config)
    full_result = optimize(full_config)
    assert full_result.l_max >= coarse_result.l_max
    assert abs(full_result.nu_star - coarse_result.nu_star) <= coarse_result.grid_resolution


@pytest.mark.slow
def test_full_grid_table1_cp():
    config = OptimizerConfig.preset(SecurityParams(**TABLE1_PARAMS), PeType.CP_EXACT)
    result = optimize(config)
    assert result.feasible
    assert result.budget.accepted(config.slack)
