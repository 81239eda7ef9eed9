"""
Size-model verb: cascade ciphertext size against the legacy PKE cascade
"""
import click

from app.cli.common import CliContext, emit_frame, handle_errors, parse_int_list
from app.core.errors import ValidationError
from app.utils.reporting import size_model_frame


@click.command("size-model")
@click.option("--nobs-list", default="2,4,6,8,10", show_default=True,
              help="Comma-separated N_obs values")
@click.option("--msg-bytes", type=int, default=102, show_default=True,
              help="Plaintext length in bytes")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV output path (default: stdout)")
@click.pass_obj
@handle_errors
def size_model_command(obj: CliContext, nobs_list, msg_bytes, out):
    """Predicted ciphertext bits per N_obs for both cascades."""
    nobs = parse_int_list(nobs_list)
    if msg_bytes < 1:
        raise ValidationError(f"msg-bytes must be positive, got {msg_bytes}")
    for n_obs in nobs:
        if n_obs < 0 or n_obs == 1:
            raise ValidationError(f"n_obs must lie in {{0, 2, 3, ...}}, got {n_obs}")
    emit_frame(size_model_frame(nobs, msg_bytes), out)
