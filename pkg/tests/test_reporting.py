"""
Test CSV report frames and the Table-1 tolerance verdicts
"""
from datetime import timedelta

import pandas as pd
import pytest

from app.models.ledger import OptimizationRun
from app.schemas.security import (
    EpsilonBudget,
    GridPreset,
    OptimizationResult,
    OptimizerConfig,
    PeType,
    SecurityParams,
)
from app.utils.reporting import (
    KNOWN_DEVIATIONS,
    TABLE1_DELTA,
    TABLE1_POINT,
    TABLE1_REFERENCE,
    optimizer_row,
    runs_frame,
    size_model_frame,
    table1_frame,
    write_csv,
)


def fake_result(pe: PeType, l_max, nu_star, resolution: float = 0.001) -> OptimizationResult:
    budget = EpsilonBudget(eps_auth=2.0 ** -61, eps_ec=2.0 ** -27, eps_pa=1e-7, eps_pe=1e-7,
                           eps_qkd=1e-6)
    return OptimizationResult(pe_type=pe, l_max=l_max, nu_star=nu_star, budget=budget,
                              grid_resolution=resolution, elapsed=timedelta(seconds=1.5))


@pytest.fixture
def table1_config(table1_params):
    return OptimizerConfig.preset(table1_params, PeType.CP_EXACT, GridPreset.COARSE)


def test_optimizer_row(table1_config):
    row = optimizer_row(fake_result(PeType.CP_EXACT, 1000, 0.01), table1_config)
    assert row["key_rate"] == 0.05
    assert row["t"] == 27
    assert row["elapsed_s"] == 1.5
    assert row["eps_total"] == pytest.approx(2.0 ** -61 + 2.0 ** -27 + 1e-7 + 2e-7)


def test_reference_covers_both_exponents():
    assert set(TABLE1_REFERENCE) == {6, 9}
    for rows in TABLE1_REFERENCE.values():
        assert set(rows) == set(PeType)


def test_table1_point(table1_params):
    """N=2e4 with half sampled, r=5000 and a single 61-bit tag"""
    params = SecurityParams(s=6, delta=TABLE1_DELTA, **TABLE1_POINT)
    assert (params.N, params.n, params.r, params.t) == (20000, 10000, 5000, 27)
    assert params.eps_auth == 2.0 ** -61
    assert params == table1_params


def test_table1_within_tolerance(table1_config):
    results = {
        PeType.SERFLING: fake_result(PeType.SERFLING, 60, 0.0432),
        PeType.CHERNOFF: fake_result(PeType.CHERNOFF, 540, 0.033),
        PeType.CP_EXACT: fake_result(PeType.CP_EXACT, 1000, 0.014),
    }
    frame = table1_frame(results, table1_config)
    assert frame["within_tolerance"].all()
    verdicts = dict(zip(frame["pe_type"], frame["known_deviation"]))
    assert verdicts["serfling"] == ""
    assert verdicts["chernoff"] == "nu"
    assert set(verdicts["cp_exact"].split(";")) == {"key_rate", "nu"}


def test_table1_strict_flags_known_deviations(table1_config):
    results = {PeType.CP_EXACT: fake_result(PeType.CP_EXACT, 1000, 0.014)}
    frame = table1_frame(results, table1_config, strict=True)
    assert not frame["within_tolerance"].iloc[0]


def test_table1_breach(table1_config):
    """A miss outside the known deviations always breaches"""
    results = {PeType.SERFLING: fake_result(PeType.SERFLING, 200, 0.043)}
    frame = table1_frame(results, table1_config)
    assert not frame["within_tolerance"].iloc[0]
    assert (6, PeType.SERFLING, "key_rate") not in KNOWN_DEVIATIONS


def test_table1_infeasible_serfling_at_s9(table1_params):
    config = OptimizerConfig.preset(table1_params.model_copy(update={"s": 9, "t": 37}),
                                    PeType.SERFLING, GridPreset.COARSE)
    frame = table1_frame({PeType.SERFLING: fake_result(PeType.SERFLING, None, None)}, config)
    assert frame["key_rate"].iloc[0] == 0.0
    assert frame["within_tolerance"].iloc[0]


def test_size_model_frame():
    frame = size_model_frame([2, 4], 102)
    assert frame["plus_ct_bits"].tolist() == [1024, 1152]
    assert frame["msg_bits"].tolist() == [816, 816]
    assert (frame["plus_over_legacy"] < 1).all()


def test_runs_frame_and_csv(db_session, tmp_path):
    db_session.add(OptimizationRun(pe_type="cp_exact", s=6, N=20000, n=10000, delta=0.0627,
                                   nu_grid_points=1000, l_max=1000, nu_star=0.01,
                                   eps_auth=0.0, eps_ec=0.0, eps_pe=0.0, eps_pa=0.0,
                                   eps_total=0.0, elapsed_s=0.1))
    db_session.commit()
    frame = runs_frame(db_session.query(OptimizationRun).all())
    assert len(frame) == 1
    assert frame.columns[0] == "schema_version"
    path = write_csv(frame, str(tmp_path / "out" / "runs.csv"))
    assert pd.read_csv(path)["l_max"].tolist() == [1000]


def test_runs_frame_empty():
    frame = runs_frame([])
    assert len(frame) == 0
    assert "l_max" in frame.columns
