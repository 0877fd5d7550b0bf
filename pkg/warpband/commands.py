from __future__ import annotations

import logging
from typing import Callable, Optional, TYPE_CHECKING

from warpband.exceptions import DuplicateCommand, UnknownCommand

if TYPE_CHECKING:
    from warpband.cli import RunConfig

log = logging.getLogger(__name__)

CommandCallback = Callable[["RunConfig"], int]


class CommandRegistry:
    """Holds the named workflow commands the CLI can dispatch to."""

    def __init__(self) -> None:
        self._commands: dict[str, CommandCallback] = {}
        self._help: dict[str, str] = {}

    def command(self, command_name: Optional[str] = None, *, help: str = ""):
        """Turn a function taking a :class:`RunConfig` into a command.

        Parameters
        ----------
        command_name: Optional[str]
            An optional name for this command,
            defaults to the name of the function
            without its ``cmd_`` prefix.
        help: str
            One line shown in ``--help``.

        Raises
        ------
        DuplicateCommand
            A command with this name already exists
        """

        def decorator(func: CommandCallback):
            name = command_name or func.__name__.removeprefix("cmd_")
            self.add_command(command_name=name, callback=func, help=help)
            return func

        return decorator

    def add_command(
        self, *, command_name: str, callback: CommandCallback, help: str = ""
    ) -> CommandRegistry:
        """Programmatically adds a command.

        Returns
        -------
        CommandRegistry
            Returns the current instance for method chaining.
        """
        if command_name in self._commands:
            raise DuplicateCommand

        log.debug("Registered command %s", command_name)
        self._commands[command_name] = callback
        self._help[command_name] = help
        return self

    def remove_command(self, command_name: str) -> CommandRegistry:
        """Programmatically removes a command.

        Notes
        -----
        Raises no error if the command doesn't exist.
        """
        self._commands.pop(command_name, None)
        self._help.pop(command_name, None)
        return self

    def get(self, command_name: str) -> CommandCallback:
        try:
            return self._commands[command_name]
        except KeyError:
            raise UnknownCommand(f"Unknown command {command_name!r}") from None

    def help_for(self, command_name: str) -> str:
        return self._help.get(command_name, "")

    @property
    def names(self) -> list[str]:
        return list(self._commands)
