"""
Cycle verbs: one hybrid cycle, a batch of cycles and the n_obs sweep
"""
import logging
from typing import Optional

import click
import pandas as pd

from app.cli.common import (
    EXIT_ABORT,
    CliContext,
    cycle_options,
    emit_frame,
    handle_errors,
    parse_int_list,
    schema_versioned,
)
from app.core.config import settings
from app.schemas.protocol import BatchReport, CycleConfig, Transport
from app.schemas.security import GridPreset, PeType
from app.utils.protocol_session import run_batch, run_cycle, sweep_nobs
from app.utils.psk_ledger import PskLedger, generate_pool
from app.utils.reporting import batch_frame, batch_summary

logger = logging.getLogger(__name__)


def build_config(obj: CliContext, n_obs: int, qber: float, s: Optional[int], pe: str,
                 grid: str, transport: str, message: Optional[str] = None,
                 cycle_id: int = 0) -> CycleConfig:
    values = {
        "n_obs": n_obs,
        "qber": qber,
        "pe_type": PeType(pe),
        "grid": GridPreset(grid),
        "transport": Transport(transport),
        "seed": obj.seed,
        "cycle_id": cycle_id,
    }
    if s is not None:
        values["s"] = s
    if message is not None:
        values["message"] = message.encode("utf-8")
    return CycleConfig(**values)


@click.command("cycle")
@click.option("--nobs", "n_obs", type=int, default=4, show_default=True,
              help="Security-strength parameter N_obs")
@click.option("--message", default=None, help="Plaintext (default: the sample payload)")
@click.option("--cycle-id", type=int, default=0, show_default=True)
@cycle_options
@click.pass_obj
@handle_errors
def cycle_command(obj: CliContext, n_obs, message, cycle_id, qber, s, pe, grid, transport,
                  out):
    """Run one full hybrid cycle between two simulated parties."""
    config = build_config(obj, n_obs, qber, s, pe, grid, transport, message, cycle_id)
    ledger = PskLedger(generate_pool(settings.PSK_POOL_BITS, obj.seed))
    report = run_cycle(config, ledger)
    batch = BatchReport(
        n_obs=n_obs, qber=qber, cycles=1, completed=int(report.completed),
        total_bits=report.qkd_bits_extracted, total_qkd_time_s=report.qkd_time_s,
        key_rate=(report.qkd_bits_extracted / report.qkd_time_s
                  if report.qkd_time_s > 0 else 0.0),
        reports=[report],
    )

    click.echo(f"status: {report.status.value}", err=out is None)
    if report.abort_detail:
        click.echo(f"detail: {report.abort_detail}", err=out is None)
    click.echo(f"sessions: {report.sessions} alphas: "
               f"{', '.join(f'{a:.4f}' for a in report.alphas)}", err=out is None)
    click.echo(f"qkd bits: {report.qkd_bits_extracted} keys match: {report.keys_match} "
               f"message ok: {report.message_ok}", err=out is None)
    emit_frame(batch_frame(batch), out)
    if not report.completed:
        click.get_current_context().exit(EXIT_ABORT)


@click.command("batch")
@click.option("--nobs", "n_obs", type=int, default=4, show_default=True)
@click.option("--cycles", type=int, default=10, show_default=True)
@click.option("--per-bound", is_flag=True, help="Re-optimize every session with all bounds")
@click.option("--summary", is_flag=True, help="Emit the aggregate row instead of per-cycle rows")
@cycle_options
@click.pass_obj
@handle_errors
def batch_command(obj: CliContext, n_obs, cycles, per_bound, summary, qber, s, pe, grid,
                  transport, out):
    """Run consecutive cycles on one PSK pool and report the key rate."""
    config = build_config(obj, n_obs, qber, s, pe, grid, transport)
    batch = run_batch(config, cycles, per_bound=per_bound)
    click.echo(f"completed {batch.completed}/{batch.cycles}, "
               f"key rate {batch.key_rate:.1f} bits/s", err=out is None)
    if summary:
        frame = schema_versioned(pd.DataFrame([batch_summary(batch)]))
    else:
        frame = batch_frame(batch)
    emit_frame(frame, out)
    if batch.completed == 0:
        click.get_current_context().exit(EXIT_ABORT)


@click.command("sweep-nobs")
@click.option("--nobs-list", default="2,4,6", show_default=True,
              help="Comma-separated N_obs values")
@click.option("--cycles", type=int, default=10, show_default=True)
@click.option("--per-bound", is_flag=True, help="Add the key rate of every bound")
@cycle_options
@click.pass_obj
@handle_errors
def sweep_nobs_command(obj: CliContext, nobs_list, cycles, per_bound, qber, s, pe, grid,
                       transport, out):
    """Per-N_obs timings, key rates and envelope sizes for plotting."""
    nobs = parse_int_list(nobs_list)
    config = build_config(obj, nobs[0], qber, s, pe, grid, transport)
    frame = sweep_nobs(config, nobs, cycles, per_bound=per_bound)
    emit_frame(schema_versioned(frame), out)
