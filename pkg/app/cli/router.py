"""
Combines all verb modules onto the root command group
"""
import click

from app.cli.export import export_command
from app.cli.optimize import optimize_command, table1_command
from app.cli.simulate import batch_command, cycle_command, sweep_nobs_command
from app.cli.size_model import size_model_command

COMMANDS = [
    optimize_command,
    table1_command,
    cycle_command,
    batch_command,
    sweep_nobs_command,
    size_model_command,
    export_command,
]


def register(group: click.Group) -> click.Group:
    """Attach every verb to the given group"""
    for command in COMMANDS:
        group.add_command(command)
    return group
