import configparser
import logging
import os
from copy import deepcopy
from typing import Callable, TypeVar

log = logging.getLogger(__name__)

T = TypeVar("T")

_TRUE_WORDS = ("true", "yes", "on", "1")
_FALSE_WORDS = ("false", "no", "off", "0")


class ConfigManager:
    """Numerical settings read from an INI file, merged over built-in defaults.

    The file is never required. When it is missing or unreadable the defaults
    stay in force and ``load_error_message`` explains why. Nothing is written
    unless ``create_missing`` is set or :meth:`save` is called.
    """

    def __init__(
        self, config_path: str, default_settings: dict, create_missing: bool = False
    ):
        self.config_path = config_path
        self.defaults = deepcopy(default_settings)
        self.config = configparser.ConfigParser(interpolation=None)
        self.load_error_message: str | None = None
        self._load_config(create_missing)

    def _load_config(self, create_missing: bool):
        merged = configparser.ConfigParser(interpolation=None)
        merged.read_dict(self.defaults)

        if not os.path.exists(self.config_path):
            log.debug(f"Settings file not found: {self.config_path}. Using defaults.")
            self.config = merged
            if create_missing:
                self.save()
            return

        user_config = configparser.ConfigParser(interpolation=None)
        try:
            read_files = user_config.read(self.config_path, encoding="utf-8")
        except configparser.Error as e:
            log.error(f"Error parsing settings file {self.config_path}: {e}")
            self.load_error_message = (
                f"Error parsing settings file {self.config_path}: {e}. "
                f"Using default settings."
            )
            self.config = merged
            return
        except (OSError, UnicodeDecodeError) as e:
            log.error(f"Could not read settings file {self.config_path}: {e}")
            self.load_error_message = (
                f"Could not read settings file {self.config_path}: {e}. "
                f"Using default settings."
            )
            self.config = merged
            return

        if not read_files:
            log.warning(f"Settings file is empty or unreadable: {self.config_path}")
            self.load_error_message = (
                f"Settings file is empty or unreadable: {self.config_path}. "
                f"Using default settings."
            )
            self.config = merged
            return

        log.info(f"Read user settings: {self.config_path}")
        for section in user_config.sections():
            if not merged.has_section(section):
                log.warning(f"Unknown settings section [{section}] kept as-is")
                merged.add_section(section)
            for key, value in user_config.items(section):
                if key not in self.defaults.get(section, {}):
                    log.warning(f"Unknown settings key [{section}]/{key}")
                merged.set(section, key, value)

        self.config = merged

    def save(self) -> bool:
        """Write the merged settings to ``config_path``. Returns True on success."""
        try:
            directory = os.path.dirname(self.config_path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(self.config_path, "w", encoding="utf-8") as handle:
                handle.write("# weyl-gauge numerical settings\n")
                handle.write("# Values here override the library defaults.\n\n")
                self.config.write(handle)
            log.info(f"Settings saved to: {self.config_path}")
            return True
        except OSError as e:
            log.error(f"Failed to write settings file {self.config_path}: {e}")
            if not self.load_error_message:
                self.load_error_message = (
                    f"Could not save settings file {self.config_path}: {e}"
                )
            return False

    def _typed(
        self,
        section: str,
        key: str,
        fallback: T,
        convert: Callable[[str], T],
        kind: str,
    ) -> T:
        if not self.config.has_section(section):
            log.warning(
                f"Attempted to get key '{key}' from non-existent section '[{section}]'. Using fallback: {fallback}"
            )
            return fallback

        raw = self.config.get(section, key, fallback=None)
        if raw is not None:
            try:
                return convert(raw)
            except ValueError:
                log.warning(
                    f"Settings value '{key}' = '{raw}' in section '[{section}]' is not a valid {kind}. Using default."
                )

        default_value = self.defaults.get(section, {}).get(key)
        if default_value is not None:
            try:
                return convert(str(default_value))
            except ValueError:
                pass

        log.warning(
            f"Could not determine valid {kind} for [{section}]/{key}. Using fallback: {fallback}"
        )
        return fallback

    def get(self, section: str, key: str, fallback: str = "") -> str:
        return self._typed(section, key, fallback, str, "string")

    def getint(self, section: str, key: str, fallback: int = 0) -> int:
        return self._typed(section, key, fallback, int, "integer")

    def getfloat(self, section: str, key: str, fallback: float = 0.0) -> float:
        return self._typed(section, key, fallback, float, "float")

    def getboolean(self, section: str, key: str, fallback: bool = False) -> bool:
        return self._typed(section, key, fallback, _parse_bool, "boolean")


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE_WORDS:
        return True
    if lowered in _FALSE_WORDS:
        return False
    raise ValueError(value)
