from dataclasses import asdict, dataclass, field, fields
import json
import logging
from os import makedirs, path
from typing import Dict, Type, Union

from treemax.core.data_classes import (
    AnalyzeConfig, GenMdpConfig, GradcheckConfig, SweepConfig, TrainConfig
)
from treemax.core.errors import InvalidModelError

logger = logging.getLogger(__name__)

CommandConfig = Union[GenMdpConfig, SweepConfig, GradcheckConfig, TrainConfig, AnalyzeConfig]

COMMAND_CONFIGS: Dict[str, Type] = {
    "gen-mdp": GenMdpConfig,
    "sweep": SweepConfig,
    "gradcheck": GradcheckConfig,
    "train": TrainConfig,
    "analyze": AnalyzeConfig,
}


@dataclass
class RunConfig:
    """A command name with its parameter record; fully determines a run."""
    command: str
    parameters: CommandConfig = field(default=None)

    def __post_init__(self) -> None:
        if self.command not in COMMAND_CONFIGS:
            raise InvalidModelError(f"unknown command '{self.command}'")
        if self.parameters is None:
            self.parameters = COMMAND_CONFIGS[self.command]()


class ConfigManager:
    """
    Manage the configuration of a run.

    Holds the active RunConfig and moves it to and from JSON files.
    """

    # The _instance flag is managed by __new__() so every caller shares the same run configuration
    _instance = None

    @classmethod
    def get_instance(cls) -> "ConfigManager":
        """Retrieve or create the singleton instance of ConfigManager."""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    def __new__(cls) -> "ConfigManager":
        """Ensure only one instance of ConfigManager is created."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self) -> None:
        """Initialize the ConfigManager instance with no active run."""
        if not self._initialized:
            self._initialized = True
            self.run_config: RunConfig | None = None

    def read_config_from_file(self, file_path: str) -> dict:
        """
        Load configuration data from a JSON file.

        Args:
            file_path (str): The path to the configuration file.

        Returns:
            dict: Configuration data loaded from the file.

        Raises:
            InvalidModelError: If the file is not valid JSON.
        """
        try:
            with open(file_path, "r") as json_file:
                return json.load(json_file)
        except json.JSONDecodeError as error:
            raise InvalidModelError(f"failed to read configuration {file_path}: {error}") from None

    def write_config_to_file(self, file_path: str) -> None:
        """Write the current configuration to a JSON file."""
        config_dir = path.dirname(file_path)
        if config_dir and not path.exists(config_dir):
            makedirs(config_dir, exist_ok=True)

        with open(file_path, "w") as json_file:
            json.dump(self.get_configuration(), json_file, indent=2, sort_keys=True)
            json_file.write("\n")
        logger.info("configuration written to %s", file_path)

    def get_configuration(self) -> dict:
        """
        Retrieve the current configuration as a dictionary.

        Returns:
            dict: {"command": ..., "parameters": {...}}.
        """
        if self.run_config is None:
            raise InvalidModelError("no configuration has been set")
        return {
            "command": self.run_config.command,
            "parameters": asdict(self.run_config.parameters),
        }

    def set_configuration(self,
                          configuration: dict,
                          export_path: str | None = None) -> RunConfig:
        """
        Set the active configuration and optionally export it.

        Args:
            configuration (dict): As produced by get_configuration().
            export_path (str, optional): Write the configuration there if given.

        Raises:
            InvalidModelError: For unknown commands or parameter names.
        """
        try:
            command = configuration["command"]
        except KeyError:
            raise InvalidModelError("configuration is missing 'command'") from None
        if command not in COMMAND_CONFIGS:
            raise InvalidModelError(f"unknown command '{command}'")

        config_class = COMMAND_CONFIGS[command]
        known = {item.name for item in fields(config_class)}
        parameters = configuration.get("parameters", {})
        unknown = sorted(set(parameters) - known)
        if unknown:
            raise InvalidModelError(f"unknown {command} parameters: {unknown}")

        self.run_config = RunConfig(command, config_class(**parameters))
        if export_path:
            self.write_config_to_file(export_path)
        return self.run_config
