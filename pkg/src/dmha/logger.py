"""Centralized logging configuration for DMHA"""

import logging
import logging.handlers
from pathlib import Path
from typing import Optional
import sys


class DmhaLogger:
    """Centralized logger for the DMHA toolkit"""

    _instance: Optional['DmhaLogger'] = None
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not DmhaLogger._initialized:
            self._setup_logging()
            DmhaLogger._initialized = True

    def _setup_logging(self):
        """Setup logging configuration"""
        self.logger = logging.getLogger('dmha')
        self.logger.setLevel(logging.DEBUG)

        # Remove existing handlers to avoid duplicates
        self.logger.handlers.clear()
        self.logger.propagate = False

        # Console handler (INFO and above); stdout is reserved for command output
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
        self.logger.addHandler(console_handler)
        self.console_handler = console_handler

        self.log_file = None
        log_dir = Path.home() / '.local' / 'share' / 'dmha' / 'logs'
        try:
            log_dir.mkdir(parents=True, exist_ok=True)
            log_file = log_dir / 'dmha.log'

            # File handler with rotation (DEBUG and above)
            file_handler = logging.handlers.RotatingFileHandler(
                log_file,
                maxBytes=5 * 1024 * 1024,  # 5 MB
                backupCount=3,
                encoding='utf-8'
            )
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            ))
            self.logger.addHandler(file_handler)
            self.log_file = log_file
        except OSError as e:
            self.logger.warning(f"File logging disabled, cannot use {log_dir}: {e}")

        self.logger.debug(f"Logging initialized, log file: {self.log_file}")

    def get_logger(self, name: str) -> logging.Logger:
        """Get a logger instance for a specific module"""
        return logging.getLogger(f'dmha.{_short_name(name)}')

    def set_level(self, level: str):
        """Set console logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"""
        numeric_level = getattr(logging, level.upper(), None)
        if not isinstance(numeric_level, int):
            raise ValueError(f'Invalid log level: {level}')
        self.console_handler.setLevel(numeric_level)
        self.logger.debug(f"Console log level set to: {level.upper()}")


def _short_name(name: str) -> str:
    # 'dmha.train' and 'train' both map to 'dmha.train'
    return name[len('dmha.'):] if name.startswith('dmha.') else name


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for a module

    Usage:
        from dmha.logger import get_logger
        logger = get_logger(__name__)
        logger.info("Message")
    """
    DmhaLogger()
    return logging.getLogger(f'dmha.{_short_name(name)}')


# Initialize logging on module import
DmhaLogger()
