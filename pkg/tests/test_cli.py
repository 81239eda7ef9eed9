"""
Test the command-line verbs and their exit codes
"""
import io

import pandas as pd
import pytest
import yaml

from app.cli.common import EXIT_ABORT, EXIT_OK, EXIT_TOLERANCE, EXIT_VALIDATION, parse_int_list
from app.core.config import settings
from app.core.errors import ValidationError
from app.main import cli

OPTIMIZE_ARGS = ["--s", "6", "--N", "20000", "--n", "10000", "--r", "5000", "--delta", "0.0627",
                 "--grid", "coarse"]


def read_stdout(result) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(result.stdout))


@pytest.fixture
def small_cycle_config(tmp_path, artifact_dir):
    """YAML settings shrinking the cycle block to the cached Table-1 code size"""
    path = tmp_path / "hoqs.yaml"
    path.write_text(yaml.safe_dump({
        "artifact_dir": str(artifact_dir),
        "cycle_raw_bits": 20000,
        "cycle_syndrome_bits": 5000,
        "log_level": "WARNING",
    }))
    return str(path)


def test_parse_int_list():
    assert parse_int_list("2, 4,6") == [2, 4, 6]
    with pytest.raises(ValidationError):
        parse_int_list("2,x")
    with pytest.raises(ValidationError):
        parse_int_list(",")


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == EXIT_OK
    assert "1.0.0" in result.output


def test_size_model(runner):
    result = runner.invoke(cli, ["size-model", "--nobs-list", "2,4"])
    assert result.exit_code == EXIT_OK, result.output
    frame = read_stdout(result)
    assert frame["plus_ct_bits"].tolist() == [1024, 1152]
    assert frame["schema_version"].tolist() == [1, 1]


def test_size_model_rejects_n_obs_one(runner):
    result = runner.invoke(cli, ["size-model", "--nobs-list", "1,2"])
    assert result.exit_code == EXIT_VALIDATION


def test_size_model_writes_file(runner, tmp_path):
    out = tmp_path / "sizes.csv"
    result = runner.invoke(cli, ["size-model", "--out", str(out)])
    assert result.exit_code == EXIT_OK
    assert pd.read_csv(out)["n_obs"].tolist() == [2, 4, 6, 8, 10]


def test_optimize_rejects_delta_above_threshold(runner):
    result = runner.invoke(cli, ["optimize", "--delta", "0.2", "--grid", "coarse"])
    assert result.exit_code == EXIT_VALIDATION


def test_unknown_option_is_validation_error(runner):
    result = runner.invoke(cli, ["optimize", "--bogus"])
    assert result.exit_code == EXIT_VALIDATION


def test_optimize_stores_and_exports(runner, tmp_path):
    """A stored run comes back through export"""
    db_url = f"sqlite:///{tmp_path / 'runs.db'}"
    result = runner.invoke(cli, ["--db", db_url, "optimize", *OPTIMIZE_ARGS])
    assert result.exit_code == EXIT_OK, result.output
    row = read_stdout(result).iloc[0]
    assert row["pe_type"] == "cp_exact"
    assert 0.035 <= row["key_rate"] <= 0.058

    out = tmp_path / "runs.csv"
    result = runner.invoke(cli, ["--db", db_url, "export", "--out", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    runs = pd.read_csv(out)
    assert len(runs) == 1
    assert runs["l_max"].iloc[0] == row["l_max"]


def test_optimize_infeasible_exits_with_abort(runner):
    args = [a if a != "6" else "9" for a in OPTIMIZE_ARGS] + ["--pe", "serfling"]
    result = runner.invoke(cli, ["optimize", *args])
    assert result.exit_code == EXIT_ABORT
    assert "Infeasible configuration" in result.stderr


def test_cycle_rejects_n_obs_one(runner):
    result = runner.invoke(cli, ["cycle", "--nobs", "1"])
    assert result.exit_code == EXIT_VALIDATION


def test_sweep_rejects_zero_cycles(runner):
    result = runner.invoke(cli, ["sweep-nobs", "--cycles", "0"])
    assert result.exit_code == EXIT_VALIDATION


def test_cycle_completes(runner, small_cycle_config):
    result = runner.invoke(cli, ["--config", small_cycle_config, "--seed", "11", "cycle",
                                 "--nobs", "2", "--qber", "0"])
    assert result.exit_code == EXIT_OK, result.output
    row = read_stdout(result).iloc[0]
    assert row["status"] == "completed"
    assert bool(row["keys_match"]) and bool(row["message_ok"])
    assert settings.CYCLE_RAW_BITS == 20000


def test_batch_without_completed_cycles(runner, small_cycle_config):
    result = runner.invoke(cli, ["--config", small_cycle_config, "batch", "--nobs", "2",
                                 "--qber", "0.15", "--cycles", "1", "--summary"])
    assert result.exit_code == EXIT_ABORT
    assert read_stdout(result)["completed"].tolist() == [0]


def test_config_from_environment(runner, small_cycle_config, monkeypatch):
    monkeypatch.setenv("HOQS_CONFIG", small_cycle_config)
    result = runner.invoke(cli, ["size-model", "--nobs-list", "2"])
    assert result.exit_code == EXIT_OK
    assert settings.CYCLE_SYNDROME_BITS == 5000


def test_bad_config_file(runner, tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("- not\n- a mapping\n")
    result = runner.invoke(cli, ["--config", str(path), "size-model"])
    assert result.exit_code != EXIT_OK


@pytest.mark.slow
def test_table1_coarse(runner, tmp_path):
    out = tmp_path / "table1.csv"
    result = runner.invoke(cli, ["table1", "--grid", "coarse", "--out", str(out)])
    assert result.exit_code in (EXIT_OK, EXIT_TOLERANCE)
    frame = pd.read_csv(out)
    assert set(frame["pe_type"]) == {"serfling", "chernoff", "cp_exact"}
