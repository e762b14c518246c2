"""Logging setup for the supremum_area package.

stdout is reserved for data, so the console handler writes to stderr.
"""

import logging
import logging.handlers
import os
import sys

LOGGER_NAME = 'supremum_area'
LEVELS = {'quiet': logging.WARNING, 'info': logging.INFO, 'debug': logging.DEBUG}

logger = logging.getLogger(LOGGER_NAME)


class StderrHandler(logging.StreamHandler):
    """StreamHandler bound to whatever sys.stderr is at emit time."""

    def __init__(self, level=logging.NOTSET):
        logging.Handler.__init__(self, level)

    @property
    def stream(self):
        return sys.stderr


def _handler(name):
    return next((h for h in logger.handlers if h.get_name() == name), None)


def setup_logging(verbosity='info', log_file=None):
    """Configure the package logger once; later calls only adjust levels."""
    if verbosity not in LEVELS:
        raise ValueError('verbosity must be one of {}'.format(sorted(LEVELS)))
    level = LEVELS[verbosity]
    logger.setLevel(logging.DEBUG)

    console = _handler('console')
    if console is None:
        console = StderrHandler()
        console.set_name('console')
        console.setFormatter(logging.Formatter('[%(levelname)s] %(message)s'))
        logger.addHandler(console)
    console.setLevel(level)

    if log_file and _handler('file') is None:
        try:
            directory = os.path.dirname(os.path.abspath(log_file))
            os.makedirs(directory, exist_ok=True)
            file_handler = logging.handlers.RotatingFileHandler(
                log_file, maxBytes=2 * 1024 * 1024, backupCount=3
            )
            file_handler.set_name('file')
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(
                logging.Formatter('%(asctime)s [%(levelname)s] %(name)s: %(message)s')
            )
            logger.addHandler(file_handler)
        except OSError as e:
            logger.warning('Could not open log file %s: %s', log_file, e)
    return logger
