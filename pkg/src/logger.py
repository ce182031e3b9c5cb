"""
Logging setup for the RingWave traffic simulator.

Every module asks for its logger through get_logger(__name__). Console output
is colored when colorlog is installed and plain otherwise. The CLI adjusts the
level of all project loggers at once through set_project_level().
"""

import logging
import sys
from pathlib import Path
from typing import Optional

try:
    import colorlog
except ImportError:  # pragma: no cover - environment-specific dependency
    colorlog = None


PROJECT_LOGGER_PREFIXES = ("src", "__main__", "ringwave")
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

_current_level = "INFO"


def _level_value(log_level: str) -> int:
    level = getattr(logging, str(log_level).upper(), None)
    if not isinstance(level, int):
        raise ValueError(f"Unknown log level: {log_level!r}")
    return level


def _console_formatter() -> logging.Formatter:
    if colorlog:
        return colorlog.ColoredFormatter(
            fmt='%(log_color)s' + LOG_FORMAT,
            datefmt=DATE_FORMAT,
            log_colors={
                'DEBUG': 'cyan',
                'INFO': 'green',
                'WARNING': 'yellow',
                'ERROR': 'red',
                'CRITICAL': 'red,bg_white',
            }
        )
    return logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)


def setup_logger(
    name: str,
    log_level: Optional[str] = None,
    log_file: Optional[Path] = None
) -> logging.Logger:
    """
    Configure a logger with a console handler and an optional file handler.

    Console records go to stderr so that command output on stdout stays clean.

    Args:
        name: Logger name, usually the calling module's __name__
        log_level: DEBUG, INFO, WARNING, ERROR or CRITICAL. Defaults to the
            level last set through set_project_level()
        log_file: Optional path of a plain-text log file

    Returns:
        logging.Logger: The configured logger

    Example:
        >>> logger = setup_logger(__name__, log_level="DEBUG")
        >>> logger.debug("tick 120: AV gap 7.31 m")
    """
    level = _level_value(log_level or _current_level)

    logger = logging.getLogger(name)
    logger.setLevel(level)

    if not logger.handlers:
        if colorlog:
            console_handler = colorlog.StreamHandler(sys.stderr)
        else:
            console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(_console_formatter())
        logger.addHandler(console_handler)

    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Return the named logger, configuring it with defaults on first use.

    Args:
        name: Logger name, usually the calling module's __name__

    Returns:
        logging.Logger: Logger instance
    """
    logger = logging.getLogger(name)
    if not logger.handlers:
        logger = setup_logger(name)
    return logger


def set_project_level(log_level: str) -> None:
    """
    Apply one level to every project logger created so far and to later ones.

    Args:
        log_level: Level name such as "WARNING"

    Raises:
        ValueError: If the level name is unknown
    """
    global _current_level
    level = _level_value(log_level)
    _current_level = log_level.upper()

    for name, candidate in logging.Logger.manager.loggerDict.items():
        if isinstance(candidate, logging.Logger) and name.startswith(PROJECT_LOGGER_PREFIXES):
            candidate.setLevel(level)


if __name__ == "__main__":
    demo = setup_logger("ringwave.demo", log_level="DEBUG")
    demo.debug("debug record")
    demo.info("info record")
    demo.warning("warning record")
    set_project_level("WARNING")
    demo.info("suppressed after set_project_level")
    demo.error("error record")
