"""
CSV reports: optimizer rows, the Table-1 comparison, batch cycles, n_obs
sweeps, size-model comparisons and stored optimizer runs.
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd

from app.core.config import settings
from app.core.errors import HoqsError
from app.models.ledger import OptimizationRun
from app.schemas.protocol import BatchReport
from app.schemas.security import OptimizationResult, OptimizerConfig, PeType
from app.utils.hybrid_encryption import cascade_ct_bits, legacy_size_model

logger = logging.getLogger(__name__)

# (nu, l/N) published for s=6, N=2e4, n=1e4, delta=0.0627, r=5000
TABLE1_REFERENCE: Dict[int, Dict[PeType, Tuple[Optional[float], Optional[float]]]] = {
    6: {
        PeType.SERFLING: (0.043, 0.003),
        PeType.CHERNOFF: (0.023, 0.027),
        PeType.CP_EXACT: (0.006, 0.066),
    },
    9: {
        PeType.SERFLING: (None, 0.0),
        PeType.CHERNOFF: (None, 0.015),
        PeType.CP_EXACT: (None, 0.062),
    },
}
# Operating point of the published comparison
TABLE1_POINT = dict(N=20000, n=10000, r=5000, p=61, q=1)
TABLE1_DELTA = 0.0627
KEY_RATE_TOLERANCE = 0.002
NU_ROUNDING = 0.0005

# Published entries this implementation does not reproduce (see DESIGN.md)
KNOWN_DEVIATIONS = {
    (6, PeType.CHERNOFF, "nu"),
    (6, PeType.CP_EXACT, "nu"),
    (6, PeType.CP_EXACT, "key_rate"),
    (9, PeType.CHERNOFF, "key_rate"),
    (9, PeType.CP_EXACT, "key_rate"),
}


def optimizer_row(result: OptimizationResult, config: OptimizerConfig) -> Dict:
    """One CSV row of an optimizer run"""
    params = config.params
    return {
        "schema_version": settings.CSV_SCHEMA_VERSION,
        "pe_type": result.pe_type.value,
        "s": params.s,
        "N": params.N,
        "n": params.n,
        "r": params.r,
        "t": params.t,
        "delta": params.delta,
        "feasible": result.feasible,
        "nu_star": result.nu_star,
        "mu_star": result.mu_star,
        "l_max": result.l_max,
        "key_rate": result.key_rate(params.N),
        "eps_auth": result.budget.eps_auth,
        "eps_ec": result.budget.eps_ec,
        "eps_pe": result.budget.eps_pe,
        "eps_pa": result.budget.eps_pa,
        "eps_total": result.budget.eps_total,
        "eps_qkd": result.budget.eps_qkd,
        "nu_grid_points": config.nu_grid_points,
        "grid_resolution": result.grid_resolution,
        "elapsed_s": result.elapsed.total_seconds(),
    }


def table1_frame(results: Dict[PeType, OptimizationResult], config: OptimizerConfig,
                 strict: bool = False) -> pd.DataFrame:
    """
    Optimizer rows next to the published values, with tolerance verdicts.

    A row breaches tolerance when nu or l/N misses the reference, unless the
    entry is a known deviation and strict is off.
    """
    s = config.params.s
    reference = TABLE1_REFERENCE.get(s, {})
    rows = []
    for pe, result in results.items():
        row = optimizer_row(result, config.model_copy(update={"pe_type": pe}))
        ref_nu, ref_rate = reference.get(pe, (None, None))
        nu_tol = NU_ROUNDING + result.grid_resolution
        checks = []
        if ref_rate is not None:
            ok = abs(row["key_rate"] - ref_rate) <= KEY_RATE_TOLERANCE
            checks.append(("key_rate", ok))
        if ref_nu is not None:
            ok = result.nu_star is not None and abs(result.nu_star - ref_nu) <= nu_tol
            checks.append(("nu", ok))
        known = [col for col, ok in checks if not ok and (s, pe, col) in KNOWN_DEVIATIONS]
        breached = [col for col, ok in checks
                    if not ok and (strict or (s, pe, col) not in KNOWN_DEVIATIONS)]
        row.update({
            "ref_nu": ref_nu,
            "ref_key_rate": ref_rate,
            "nu_tolerance": nu_tol,
            "key_rate_tolerance": KEY_RATE_TOLERANCE,
            "known_deviation": ";".join(known),
            "within_tolerance": not breached,
        })
        rows.append(row)
    return pd.DataFrame(rows)


def batch_frame(batch: BatchReport) -> pd.DataFrame:
    """One row per cycle"""
    rows = []
    for report in batch.reports:
        rows.append({
            "schema_version": settings.CSV_SCHEMA_VERSION,
            "cycle_id": report.cycle_id,
            "n_obs": report.n_obs,
            "qber": batch.qber,
            "status": report.status.value,
            "sessions": report.sessions,
            "alphas": ";".join(f"{a:.6f}" for a in report.alphas),
            "session_lengths": ";".join(str(x) for x in report.session_lengths),
            "qkd_bits": report.qkd_bits_extracted,
            "qkd_time_s": report.qkd_time_s,
            "pqc_time_s": report.pqc_time_s,
            "he_time_s": report.he_time_s,
            "total_time_s": report.total_time_s,
            "he_steps": report.he_steps,
            "ct_bytes": report.ct_bytes,
            "envelope_bytes": report.envelope_bytes,
            "keys_match": report.keys_match,
            "message_ok": report.message_ok,
            "psk_bits": report.psk_bits_consumed,
            "mac_tags": report.mac_tags,
            "eps_auth": report.eps_auth,
            "keyspace_bits": report.keyspace_bits,
        })
    return pd.DataFrame(rows)


def batch_summary(batch: BatchReport) -> Dict:
    summary = {
        "n_obs": batch.n_obs,
        "cycles": batch.cycles,
        "completed": batch.completed,
        "total_bits": batch.total_bits,
        "total_qkd_time_s": batch.total_qkd_time_s,
        "key_rate": batch.key_rate,
        "qber_mean": batch.qber_mean,
        "qber_std": batch.qber_std,
    }
    summary.update({f"rate_{pe}": rate for pe, rate in batch.rates_per_bound.items()})
    return summary


def size_model_frame(nobs_list: Sequence[int], msg_bytes: int) -> pd.DataFrame:
    """Cascade vs legacy ciphertext size per n_obs"""
    msg_bits = 8 * msg_bytes
    rows = []
    for n_obs in nobs_list:
        legacy = legacy_size_model(n_obs, msg_bits)
        plus_bits = cascade_ct_bits(n_obs, msg_bits)
        rows.append({
            "schema_version": settings.CSV_SCHEMA_VERSION,
            "n_obs": n_obs,
            "gamma": -(-n_obs // 2),
            "msg_bits": msg_bits,
            "plus_ct_bits": plus_bits,
            "legacy_ct_bits": legacy.final_bits,
            "legacy_sizes": ";".join(str(x) for x in legacy.sizes),
            "plus_over_legacy": plus_bits / legacy.final_bits if legacy.final_bits else None,
        })
    return pd.DataFrame(rows)


def runs_frame(runs: Iterable[OptimizationRun]) -> pd.DataFrame:
    """Stored optimizer runs as a flat table"""
    columns = ["id", "pe_type", "s", "N", "n", "delta", "nu_grid_points", "l_max", "nu_star",
               "mu_star", "eps_auth", "eps_ec", "eps_pe", "eps_pa", "eps_total", "elapsed_s",
               "created_at"]
    rows: List[Dict] = [{col: getattr(run, col) for col in columns} for run in runs]
    frame = pd.DataFrame(rows, columns=columns)
    frame.insert(0, "schema_version", settings.CSV_SCHEMA_VERSION)
    return frame


def write_csv(frame: pd.DataFrame, path: str) -> str:
    """Write UTF-8, comma-separated, header row; returns the path"""
    try:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(target, index=False, encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise HoqsError(f"CSV write failed: {str(e)}") from e
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return str(target)
