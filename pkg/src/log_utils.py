# src/log_utils.py
"""
log_utils.py
============

Standardized, color-coded console logging for the VoxSentinel pipeline.

Every stage (ingest, feature extraction, training, tuning, evaluation) reports
progress through the helpers below. Messages are timestamped and written to
**stderr**, so the command-line tool keeps its machine-readable outputs in files.

Levels
------
- DEBUG → Cyan   (only when verbose *and* debug are enabled)
- INFO  → Green  (only when verbose is enabled)
- WARN  → Yellow (always shown)
- ERROR → Red    (always shown)

Functions
---------
- `set_verbose(value: bool, debug: bool = False) -> None`
- `debug(msg: str) -> None`
- `info(msg: str) -> None`
- `warn(msg: str) -> None`
- `error(msg: str) -> None`

Usage Example
-------------
    from src.log_utils import set_verbose, info, warn

    set_verbose(True)
    info("Extracting mel features for 400 chunks ...")
    warn("Skipping corpus/spk03/utt07.wav: truncated data chunk.")
"""

import sys
from datetime import datetime

from colorama import Fore, Style, init

# Initialize colorama (needed for Windows)
init(autoreset=True)

_VERBOSE = False
_DEBUG = False


def set_verbose(value: bool, debug: bool = False) -> None:
    """Set global verbosity for logging."""
    global _VERBOSE, _DEBUG
    _VERBOSE = value
    _DEBUG = value and debug


def _ts() -> str:
    """Return current timestamp as a string."""
    return datetime.now().strftime("%Y-%m-%d %H:%M:%S")


def _emit(color: str, level: str, msg: str) -> None:
    print(f"{color}[{_ts()}][{level}]{Style.RESET_ALL} {msg}", file=sys.stderr)


def debug(msg: str) -> None:
    if _DEBUG:
        _emit(Fore.CYAN, "DEBUG", msg)


def info(msg: str) -> None:
    if _VERBOSE:
        _emit(Fore.GREEN, "INFO", msg)


def warn(msg: str) -> None:
    # Warnings always show
    _emit(Fore.YELLOW, "WARN", msg)


def error(msg: str) -> None:
    # Errors always show
    _emit(Fore.RED, "ERROR", msg)
