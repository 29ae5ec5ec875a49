"""
Module for logger.

Loggers of gnnprint modules propagate to the package logger `gnnprint`, which
holds the handlers. Loggers outside the package get their own stdout handler.
"""
import logging
import os
import sys
from contextlib import contextmanager
from typing import Iterator

PACKAGE = "gnnprint"
ENV_LOG_LEVEL = "GNNPRINT_LOG_LEVEL"
FORMATTER = logging.Formatter(
    fmt="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)


def level_from_env() -> int:
    """
    Read the log level from the environment variable `GNNPRINT_LOG_LEVEL`.

    - 0: NOTSET, will be set to DEBUG
    - 1: DEBUG
    - 2: INFO (default)
    - 3: WARNING
    - 4: ERROR
    - 5: CRITICAL

    https://docs.python.org/3/library/logging.html#levels

    :return: level of the logging module.
    """
    value = os.environ.get(ENV_LOG_LEVEL, "2")
    if value.strip() not in [str(k) for k in range(6)]:
        raise ValueError(f"{ENV_LOG_LEVEL} must be one of 0, ..., 5, got {value}")
    return max(int(value) * 10, logging.DEBUG)


def _attach_stdout(logger: logging.Logger, level: int):
    logger.setLevel(level)
    logger.propagate = False
    # loggers are cached by name
    for handler in list(logger.handlers):
        if getattr(handler, "_gnnprint_stdout", False):
            logger.removeHandler(handler)
    handler = logging.StreamHandler(stream=sys.stdout)
    handler.setFormatter(FORMATTER)
    handler.setLevel(level)
    handler._gnnprint_stdout = True  # type: ignore
    logger.addHandler(handler)


def get(name: str) -> logging.Logger:
    """
    Configure the logger with formatter and handlers.

    The logger should be used as:

    .. code-block:: python

        from gnnprint import log

        logger = log.get(__name__)

    :param name: module name.
    :return: configured logger.
    """
    level = level_from_env()
    logger = logging.getLogger(name=name)
    if name == PACKAGE or name.startswith(PACKAGE + "."):
        _attach_stdout(logging.getLogger(PACKAGE), level)
        if name != PACKAGE:
            logger.setLevel(level)
            logger.propagate = True
        return logger
    _attach_stdout(logger, level)
    return logger


@contextmanager
def file_output(path: str) -> Iterator[str]:
    """
    Copy the messages of all gnnprint loggers into a file while open.

    :param path: log file path, appended to if it exists.
    """
    handler = logging.FileHandler(os.path.expanduser(path))
    handler.setFormatter(FORMATTER)
    handler.setLevel(level_from_env())
    package = logging.getLogger(PACKAGE)
    package.addHandler(handler)
    try:
        yield path
    finally:
        package.removeHandler(handler)
        handler.close()
