"""General helpers for the compensator_lab package."""

import csv
import logging
from pathlib import Path

LOGGER = logging.getLogger('compensator_lab')
"""Module logger instance."""


class LabError(RuntimeError):
    """Base class for all errors raised by compensator_lab."""


class GridError(LabError):
    """Invalid time grid or path shape."""


class DegenerateLaw(LabError):
    """Survival probability reached zero before the evaluation time."""


class InsufficientData(LabError):
    """Too few uncensored samples to estimate a law."""


class ZeroMass(LabError):
    """Increasing path has no mass to decompose."""


class InsufficientPaths(LabError):
    """Too few paths for a statistical test."""


class BracketUnavailable(LabError):
    """No closed-form predictable bracket is registered for the request."""


class HorizonViolation(LabError):
    """Evaluation time is outside the range where a formula is defined."""


class ViewViolation(LabError):
    """Test functional reads outside its filtration view or breaks its declared bound."""


class ConfigError(LabError):
    """Configuration document failed validation."""


def configure_logger(log_dir, name='compensator_lab'):
    """Configure LOGGER to output to a new file on each call.

    Args:
        log_dir: directory for the log file. Created if missing
        name: stem of the log file name. Default is the package name

    Returns:
        Path: path to the log file

    """
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    log_path = log_dir / f'{name}.log'

    logging.basicConfig(
        filemode='w',
        filename=log_path,
        format='%(asctime)s\t%(levelname)s\t%(filename)s:%(lineno)d\t%(funcName)s():\t%(message)s',
        level=logging.DEBUG,
        force=True,
    )
    return log_path


def export_rows_as_csv(csv_filename, columns, rows):
    """Create a CSV file from a header and an iterable of row sequences.

    Args:
        csv_filename: Path to csv file
        columns: list of column names
        rows: iterable of row sequences in column order

    """
    with open(csv_filename, 'w', newline='\n', encoding='utf-8') as csv_file:
        writer = csv.writer(csv_file, delimiter=',', quoting=csv.QUOTE_MINIMAL)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([*row])
