"""
Shared CLI plumbing: run context, exit codes, error mapping and option parsing
"""
import functools
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import click
import pandas as pd
import pydantic
from sqlalchemy.orm import Session, sessionmaker

from app.core.config import settings
from app.core.database import init_db, make_engine
from app.core.errors import HoqsError, ProtocolAbort, ValidationError
from app.utils.reporting import write_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_VALIDATION = 3
EXIT_TOLERANCE = 4


@dataclass
class CliContext:
    """Options of the root group, passed to every verb"""
    seed: int = 0
    db_url: Optional[str] = None
    _session_factory: Optional[sessionmaker] = field(default=None, repr=False)

    def session(self, url: Optional[str] = None) -> Optional[Session]:
        """Database session for --db (or url), tables created on first use"""
        url = url or self.db_url
        if url is None:
            return None
        if self._session_factory is None:
            engine = make_engine(url)
            init_db(bind=engine)
            self._session_factory = sessionmaker(autocommit=False, autoflush=False,
                                                 bind=engine)
        return self._session_factory()


class HoqsGroup(click.Group):
    """Root group mapping verb usage errors onto the validation exit code"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_VALIDATION
            raise


def handle_errors(func: Callable) -> Callable:
    """Translate toolkit exceptions into exit codes"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (pydantic.ValidationError, ValidationError) as e:
            click.echo(f"Error: invalid parameters: {e}", err=True)
            click.get_current_context().exit(EXIT_VALIDATION)
        except ProtocolAbort as e:
            click.echo(f"Error: aborted: {e}", err=True)
            click.get_current_context().exit(EXIT_ABORT)
        except HoqsError as e:
            logger.error(f"Command failed: {e}")
            click.echo(f"Error: {e}", err=True)
            click.get_current_context().exit(1)

    return wrapper


def parse_int_list(value: str) -> List[int]:
    """'2,4,6' -> [2, 4, 6]"""
    try:
        items = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"Expected a comma-separated list of integers, got {value!r}") \
            from None
    if not items:
        raise ValidationError("Integer list must not be empty")
    return items


def emit_frame(frame: pd.DataFrame, out: Optional[str]) -> None:
    """Write the frame to --out, or print it as CSV"""
    if out:
        path = write_csv(frame, out)
        click.echo(f"Wrote {len(frame)} rows to {path}")
    else:
        click.echo(frame.to_csv(index=False), nl=False)


def schema_versioned(frame: pd.DataFrame) -> pd.DataFrame:
    if "schema_version" not in frame.columns:
        frame.insert(0, "schema_version", settings.CSV_SCHEMA_VERSION)
    return frame


# Options shared by the cycle verbs
def cycle_options(func: Callable) -> Callable:
    options = [
        click.option("--qber", type=float, default=0.0644, show_default=True,
                     help="Simulated channel QBER"),
        click.option("--s", "s", type=int, default=None, help="eps_QKD = 10^-s"),
        click.option("--pe", type=click.Choice(["serfling", "chernoff", "cp_exact"]),
                     default="cp_exact", show_default=True, help="Parameter-estimation bound"),
        click.option("--grid", type=click.Choice(["full", "coarse"]), default="coarse",
                     show_default=True, help="Optimizer grid preset"),
        click.option("--transport", type=click.Choice(["inprocess", "tcp"]),
                     default="inprocess", show_default=True),
        click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="CSV output path (default: stdout)"),
    ]
    for option in reversed(options):
        func = option(func)
    return func
