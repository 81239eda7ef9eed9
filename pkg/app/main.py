"""
Main entry point for the HOQS+ finite-key toolkit
"""
import logging
import os
from typing import Optional

import click

from app.cli.common import CliContext, HoqsGroup
from app.cli.router import register
from app.core.config import CONFIG_ENV_VAR, apply_settings, load_settings, settings

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str) -> None:
    logging.basicConfig(format=LOG_FORMAT)
    logging.getLogger().setLevel(level.upper())


@click.group(cls=HoqsGroup)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML settings file (default: $HOQS_CONFIG)")
@click.option("--log-level", default=None,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              help="Log level (default: LOG_LEVEL setting)")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for raw keys, PSK pool and protocol randomness")
@click.option("--db", "db_url", default=None,
              help="Database URL; optimizer runs are stored when given")
@click.version_option("1.0.0", prog_name="hoqs")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], log_level: Optional[str], seed: int,
        db_url: Optional[str]):
    """Finite-key QKD calculus and the hybrid QKD/PQC pipeline."""
    path = config_path or os.getenv(CONFIG_ENV_VAR)
    if path:
        try:
            apply_settings(load_settings(path))
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--config") from e
    if log_level:
        settings.LOG_LEVEL = log_level.upper()
    configure_logging(settings.LOG_LEVEL)
    logger.debug(f"{settings.PROJECT_NAME}: seed={seed} db={'on' if db_url else 'off'}")
    ctx.obj = CliContext(seed=seed, db_url=db_url)


register(cli)


if __name__ == "__main__":
    cli()
