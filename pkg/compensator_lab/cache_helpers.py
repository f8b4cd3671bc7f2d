"""Helpers for writing reports and for the report index that lets a run reuse an identical earlier run.

Notes on dataset. Full documentation: https://dataset.readthedocs.io/en/latest/api.html

```py
index = DBConnect(outdir / '_report_index.db')
table = index.db['reports']
ic([*table.find(scenario='azema')])
```

"""

import hashlib
import json
from pathlib import Path

import dataset

from .lab_helpers import LOGGER

INDEX_NAME = '_report_index.db'
"""File name of the report index inside an output directory."""


class DBConnect:
    """Lazy `dataset` connection to the report index of one output directory.

    The index has one `reports` table keyed by config hash, so `--reuse` finds the report of an identical earlier run.
    The connection opens on first access to `db` and stays open for the life of the instance.

    """

    database_path = None
    """Path to the SQLite file of the report index, set in `__init__()`."""

    _db = None

    @property
    def db(self):
        """Return the report index database, opening the connection on first use.

        Returns:
            dataset.Database: report index

        """
        if self._db is None:
            LOGGER.debug(f'Opening report index {self.database_path}')
            self._db = dataset.connect(f'sqlite:///{self.database_path}')
        return self._db

    def __init__(self, database_path):
        """Resolve the index path and create its directory.

        Args:
            database_path: path to the SQLite file, usually `<outdir>/_report_index.db`

        """
        self.database_path = Path(database_path).resolve()
        self.database_path.parent.mkdir(parents=True, exist_ok=True)


def to_builtin(obj):
    """Convert numpy scalars and arrays nested in containers to plain Python types."""  # noqa: DAR101,DAR201
    if isinstance(obj, dict):
        return {str(key): to_builtin(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(value) for value in obj]
    if hasattr(obj, 'tolist'):
        return to_builtin(obj.tolist())
    return obj


def pretty_dump_json(filename, obj):
    """Write indented JSON file.

    Args:
        filename: Path or plain string filename to write (should end with `.json`)
        obj: JSON object to write

    """
    LOGGER.debug(f'Creating file: {filename}')
    Path(filename).write_text(json.dumps(to_builtin(obj), indent=4, separators=(',', ': ')) + '\n')


def config_key(config_dict):
    """Return a stable hash for a configuration dictionary.

    Args:
        config_dict: JSON-compatible configuration

    Returns:
        str: hex sha256 of the canonical JSON encoding

    """
    canonical = json.dumps(to_builtin(config_dict), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def initialize_index(index):
    """Ensure the reports table exists. Remove rows whose report file was manually removed.

    Args:
        index: DBConnect instance for the report index

    """
    table = index.db.create_table('reports')

    removed_files = []
    for row in table:
        if not Path(row['filename']).is_file():
            removed_files.append(row['filename'])
    LOGGER.debug(f'Removing files: {removed_files}' if len(removed_files) > 0 else 'No removed files found')

    for filename in removed_files:
        table.delete(filename=filename)


def match_config_in_index(index, key):
    """Return list of matches for the given config key in the report index.

    Args:
        index: DBConnect instance for the report index
        key: value from `config_key()`

    Returns:
        list: list of match object with keys of the SQL table

    """
    return [*index.db.load_table('reports').find(config_key=key)]


def store_report(index, scenario, key, filename, obj):
    """Write the report JSON file and track it in the index.

    An existing row for the same file is replaced, so rerunning into the same output directory keeps one row.

    Args:
        index: DBConnect instance for the report index
        scenario: scenario id
        key: value from `config_key()`
        filename: destination report path
        obj: JSON object to write

    """
    pretty_dump_json(filename, obj)
    new_row = {'filename': str(Path(filename).resolve()), 'scenario': scenario, 'config_key': key}
    LOGGER.debug(f'upserting row: {new_row}')
    index.db.load_table('reports').upsert(new_row, ['filename'])
