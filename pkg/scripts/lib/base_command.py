"""Base class for the command-line entry points.

Each command defines its arguments and an execute() method; run() parses
arguments, executes, and turns library errors into exit codes plus one
machine-readable JSON line on stderr. The same command objects are mounted
as sub-commands by scripts/poisonlab.py.
"""

import argparse
import traceback
from abc import ABC, abstractmethod
from collections.abc import Sequence

from lib.errors import EXIT_NUMERIC, PoisonLabError
from lib.logging import error, fail_line, verbose_enabled


class LabCommand(ABC):
    """Base class for poisonlab commands.

    Example:
        class TableCommand(LabCommand):
            def __init__(self) -> None:
                super().__init__(name="table", description="Combine report.json files")

            def add_arguments(self, parser: argparse.ArgumentParser) -> None:
                parser.add_argument("directory", type=Path)

            def execute(self, args: argparse.Namespace) -> int:
                ...
                return EXIT_OK

        if __name__ == "__main__":
            sys.exit(TableCommand().run())
    """

    def __init__(self, name: str, description: str) -> None:
        """Initialize the command.

        Args:
            name: Sub-command name (run, table, prep)
            description: Help text for the argument parser
        """
        self.name = name
        self.description = description

    @abstractmethod
    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register the command's arguments on parser."""

    @abstractmethod
    def execute(self, args: argparse.Namespace) -> int:
        """Do the work; returns an exit status. Library errors propagate."""

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog=self.name,
            description=self.description,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        self.add_arguments(parser)
        return parser

    def invoke(self, args: argparse.Namespace) -> int:
        """Execute with error mapping.

        PoisonLabError subclasses map to their exit codes; anything else is a
        numeric failure of the simulation stack.
        """
        try:
            return self.execute(args)
        except PoisonLabError as e:
            error(str(e))
            fail_line(type(e).__name__, e.exit_code, str(e))
            return e.exit_code
        except (ArithmeticError, ValueError) as e:
            error(f"{self.name} failed: {e}")
            if verbose_enabled():
                traceback.print_exc()
            fail_line(type(e).__name__, EXIT_NUMERIC, str(e))
            return EXIT_NUMERIC

    def run(self, argv: Sequence[str] | None = None) -> int:
        """Main entry point: parse argv, execute, return the exit status."""
        args = self.build_parser().parse_args(argv)
        return self.invoke(args)


def dispatch(commands: Sequence[LabCommand], argv: Sequence[str] | None = None) -> int:
    """Parse `<command> [args]` and invoke the matching command."""
    parser = argparse.ArgumentParser(
        prog="poisonlab",
        description="Action-poisoning attacks on linear contextual bandits",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in commands:
        sub = subparsers.add_parser(command.name, help=command.description)
        command.add_arguments(sub)
        sub.set_defaults(handler=command)
    args = parser.parse_args(argv)
    handler: LabCommand = args.handler
    return handler.invoke(args)
