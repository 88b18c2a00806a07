#!/usr/bin/env python3
"""
plandiff - Main entry point for the application.
This file will setup and run the CLI commands.
"""

import json
import logging
import sys

import click

from app.cli.commands import (LabContext, ablate_command, attention_command, gen_data, plan_command,
                              report_command, run_command, stats_command, train_command)
from app.errors import ConfigNotFound, LabError
from app.utils.helpers import CODE_VERSION

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODULE_ERROR = 2
LOG_FILE = "plandiff.log"


def configure_logging(debug: bool = False) -> None:
    """Log to plandiff.log and stderr; --debug lowers the level to DEBUG."""
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(LOG_FILE),
            logging.StreamHandler()
        ]
    )
    if debug:
        logging.getLogger().setLevel(logging.DEBUG)
        logger.debug("Debug mode enabled")


class LabGroup(click.Group):
    """Click group mapping failures to exit codes: 1 for usage, 2 for module errors."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ConfigNotFound as e:
            click.echo(json.dumps(e.to_dict(), sort_keys=True), err=True)
            ctx.exit(EXIT_USAGE)
        except LabError as e:
            logger.error(f"{e.code}: {e.message}", exc_info=logger.isEnabledFor(logging.DEBUG))
            click.echo(json.dumps(e.to_dict(), sort_keys=True), err=True)
            ctx.exit(EXIT_MODULE_ERROR)

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                              standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.UsageError as e:
            e.show()
            code = EXIT_USAGE
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = EXIT_USAGE
        if standalone_mode:
            sys.exit(code)
        return code


@click.group(cls=LabGroup)
@click.version_option(version=CODE_VERSION)
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="Experiment config JSON (default: built-in defaults)")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config key, e.g. --set training.epochs=5")
@click.option("--debug", is_flag=True, help="Enable debug output")
@click.pass_context
def cli(ctx, config_path, overrides, debug):
    """plandiff - plan-conditioned masked diffusion experiments at desk scale."""
    configure_logging(debug)
    for item in overrides:
        if "=" not in item:
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}", param_hint="--set")
    ctx.obj = LabContext(config_path=config_path, overrides=tuple(overrides))


# Register commands
cli.add_command(gen_data)
cli.add_command(train_command)
cli.add_command(plan_command)
cli.add_command(run_command)
cli.add_command(ablate_command)
cli.add_command(attention_command)
cli.add_command(stats_command)
cli.add_command(report_command)


def main():
    """Main entry point for the CLI app."""
    cli(prog_name="plandiff")


if __name__ == "__main__":
    main()
