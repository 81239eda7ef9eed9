"""
Optimizer verbs: a single key-length optimization and the Table-1 reproduction
"""
import logging
from typing import Dict, Optional

import click
import pandas as pd
from sqlalchemy.orm import Session

from app.cli.common import EXIT_ABORT, EXIT_TOLERANCE, CliContext, emit_frame, handle_errors
from app.core.config import settings
from app.core.errors import HoqsError
from app.models.ledger import OptimizationRun
from app.schemas.security import (
    GridPreset,
    OptimizationResult,
    OptimizerConfig,
    PeType,
    SecurityParams,
)
from app.utils.finite_key_optimizer import feasibility_report, optimize, optimize_all_bounds
from app.utils.reporting import TABLE1_DELTA, TABLE1_POINT, optimizer_row, table1_frame

logger = logging.getLogger(__name__)


def record_run(db: Optional[Session], result: OptimizationResult,
               config: OptimizerConfig) -> Optional[OptimizationRun]:
    """Persist one optimizer run when a database is configured"""
    if db is None:
        return None
    params = config.params
    budget = result.budget
    run = OptimizationRun(
        pe_type=result.pe_type.value,
        s=params.s,
        N=params.N,
        n=params.n,
        delta=params.delta,
        nu_grid_points=config.nu_grid_points,
        l_max=result.l_max,
        nu_star=result.nu_star,
        mu_star=result.mu_star,
        eps_auth=budget.eps_auth,
        eps_ec=budget.eps_ec,
        eps_pe=budget.eps_pe,
        eps_pa=budget.eps_pa,
        eps_total=budget.eps_total,
        elapsed_s=result.elapsed.total_seconds(),
    )
    try:
        db.add(run)
        db.commit()
        db.refresh(run)
    except Exception as e:
        db.rollback()
        logger.error(f"Failed to store optimizer run: {e}")
        raise HoqsError(f"Storing optimizer run failed: {str(e)}") from e
    logger.info(f"Stored optimizer run {run.id}")
    return run


def summary_lines(result: OptimizationResult, N: int) -> list:
    lines = [f"pe_type: {result.pe_type.value}"]
    if result.feasible:
        lines += [
            f"nu*: {result.nu_star:.6f}",
            f"mu*: {result.mu_star:.3e}" if result.mu_star is not None else "mu*: -",
            f"l: {result.l_max}",
            f"l/N: {result.key_rate(N):.4f}",
        ]
    else:
        lines.append("no positive key")
    budget = result.budget
    lines += [
        f"eps_auth={budget.eps_auth:.3e} eps_ec={budget.eps_ec:.3e} "
        f"eps_pe={budget.eps_pe:.3e} eps_pa={budget.eps_pa:.3e} "
        f"total={budget.eps_total:.3e} (eps_QKD={budget.eps_qkd:.1e})",
        f"elapsed: {result.elapsed.total_seconds():.2f}s",
    ]
    return lines


@click.command("optimize")
@click.option("--s", "s", type=int, default=None, help="eps_QKD = 10^-s")
@click.option("--N", "N", type=int, default=None, help="Raw key bits")
@click.option("--n", "n", type=int, default=None, help="Sampled bits (default N/2)")
@click.option("--r", "r", type=int, default=None, help="Syndrome bits")
@click.option("--delta", type=float, required=True, help="QBER threshold (the computed alpha)")
@click.option("--pe", type=click.Choice([pe.value for pe in PeType]), default="cp_exact",
              show_default=True)
@click.option("--grid", type=click.Choice([g.value for g in GridPreset]), default="full",
              show_default=True)
@click.option("--workers", type=int, default=None, help="Optimizer worker processes")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV output path (default: stdout)")
@click.pass_obj
@handle_errors
def optimize_command(obj: CliContext, s, N, n, r, delta, pe, grid, workers, out):
    """Maximize the extractable key length for one parameter set."""
    params = SecurityParams(
        s=s or settings.S_EXPONENT,
        N=N or settings.RAW_BITS,
        n=n,
        r=r or settings.SYNDROME_BITS,
        p=settings.MAC_TAG_BITS,
        q=settings.MAC_TAG_COUNT,
        delta=delta,
    )
    extra = {"workers": workers} if workers else {}
    config = OptimizerConfig.preset(params, PeType(pe), GridPreset(grid), **extra)
    result = optimize(config)
    record_run(obj.session(), result, config)

    for line in summary_lines(result, params.N):
        click.echo(line, err=out is None)
    emit_frame(pd.DataFrame([optimizer_row(result, config)]), out)

    if not result.feasible:
        report = feasibility_report(result, config.slack)
        diagnostics = ", ".join(f"{k}={v:g}" for k, v in sorted(report.items()))
        click.echo(f"Infeasible configuration: {diagnostics}", err=True)
        click.get_current_context().exit(EXIT_ABORT)


@click.command("table1")
@click.option("--s", "s", type=click.Choice(["6", "9"]), default="6", show_default=True,
              help="Security exponent of the published comparison")
@click.option("--grid", type=click.Choice([g.value for g in GridPreset]), default="full",
              show_default=True)
@click.option("--strict", is_flag=True, help="Count known deviations as breaches")
@click.option("--workers", type=int, default=None, help="Optimizer worker processes")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV output path (default: stdout)")
@click.pass_obj
@handle_errors
def table1_command(obj: CliContext, s, grid, strict, workers, out):
    """Reproduce the three-bound comparison at N=2e4, n=1e4, r=5000."""
    params = SecurityParams(s=int(s), delta=TABLE1_DELTA, **TABLE1_POINT)
    extra = {"workers": workers} if workers else {}
    config = OptimizerConfig.preset(params, PeType.CP_EXACT, GridPreset(grid), **extra)
    results: Dict[PeType, OptimizationResult] = optimize_all_bounds(config)

    db = obj.session()
    for pe, result in results.items():
        record_run(db, result, config.model_copy(update={"pe_type": pe}))

    frame = table1_frame(results, config, strict=strict)
    emit_frame(frame, out)
    breaches = frame.loc[~frame["within_tolerance"], "pe_type"].tolist()
    if breaches:
        click.echo(f"Tolerance breach: {', '.join(breaches)}", err=True)
        click.get_current_context().exit(EXIT_TOLERANCE)
