import logging
import os
from datetime import datetime

FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logger(log_file=None, level=logging.INFO, log_dir=None):
    """Set up the root logger with a file and a console handler"""
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    if log_file is None:
        log_dir = log_dir or os.path.join("output", "logs")
        os.makedirs(log_dir, exist_ok=True)
        log_file = os.path.join(log_dir, f"mackrl_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log")
    else:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)

    logger = logging.getLogger()
    logger.setLevel(level)

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()

    file_handler = logging.FileHandler(log_file)
    file_handler.setLevel(level)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)

    formatter = logging.Formatter(FORMAT)
    file_handler.setFormatter(formatter)
    console_handler.setFormatter(formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    return logger
