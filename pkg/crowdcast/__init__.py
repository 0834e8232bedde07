import logging
import sys

from io import StringIO

__version__ = "2024.10.19"

# package-wide logger
logger = logging.getLogger(__name__)
logger.setLevel(logging.WARNING)

# errors are also kept in memory, useful for tests and notebooks
log_stream = StringIO()
log_handler = logging.StreamHandler(stream=log_stream)
log_handler.setLevel(logging.ERROR)
logger.addHandler(log_handler)

console_handler = logging.StreamHandler(stream=sys.stderr)
console_handler.setLevel(logging.DEBUG)
console_handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
logger.addHandler(console_handler)


def set_verbosity(level):
    """
    Sets the package log level from a verbosity count.

    Args:
        level (int): 0 for warnings only, 1 for info, 2 or more for debug
    """
    if level >= 2:
        logger.setLevel(logging.DEBUG)
    elif level == 1:
        logger.setLevel(logging.INFO)
    else:
        logger.setLevel(logging.WARNING)
