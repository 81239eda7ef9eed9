"""
Export verb: stored optimizer runs as CSV
"""
import logging

import click

from app.cli.common import CliContext, emit_frame, handle_errors
from app.core.config import settings
from app.models.ledger import OptimizationRun
from app.utils.reporting import runs_frame

logger = logging.getLogger(__name__)


@click.command("export")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV output path")
@click.pass_obj
@handle_errors
def export_command(obj: CliContext, out):
    """Dump every stored optimizer run, oldest first."""
    db = obj.session(obj.db_url or settings.DATABASE_URL)
    try:
        runs = (
            db.query(OptimizationRun)
            .order_by(OptimizationRun.created_at.asc(), OptimizationRun.id.asc())
            .all()
        )
        frame = runs_frame(runs)
    finally:
        db.close()
    logger.info(f"Exporting {len(frame)} optimizer runs")
    emit_frame(frame, out)
