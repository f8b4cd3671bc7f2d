"""DoIt Script. Run all tasks with `poetry run doit` or single task with `poetry run doit run smoke`."""

from pathlib import Path

from compensator_lab.scenarios import DEFAULTS

PROJ_DIR = Path(__file__).parent
"""Project root."""

SMOKE_DIR = PROJ_DIR / 'lab_output' / 'smoke'
"""Output directory of the minimum-scale scenario runs."""

SMOKE_STEPS = {'counterexample': 2 ** 12, 'azema': 2 ** 10}
"""Grid overrides for the smoke runs. Other scenarios keep their defaults."""


def task_test():
    """Run the quick test suite (without the SLOW acceptance runs).

    Returns:
        dict: DoIt task

    """
    return {
        'actions': ['poetry run pytest tests -m "not SLOW" -x'],
        'verbosity': 2,
    }


def task_coverage():
    """Run the full test suite with coverage.

    Returns:
        dict: DoIt task

    """
    return {
        'actions': ['poetry run pytest tests --cov=compensator_lab --cov-report=term-missing --cov-report=html'],
        'verbosity': 2,
    }


def task_smoke():
    """Run every scenario at the minimum path count. A failed verdict at this scale is reported, not fatal.

    Yields:
        dict: DoIt sub-task per scenario

    """
    for scenario in DEFAULTS:
        steps = f' --steps {SMOKE_STEPS[scenario]}' if scenario in SMOKE_STEPS else ''
        command = f'poetry run compensator-lab scenario {scenario} --paths 1000 --outdir {SMOKE_DIR}{steps}'
        yield {
            'name': scenario,
            'actions': [f'{command} || test $? -eq 1'],
            'verbosity': 2,
        }


DOIT_CONFIG = {
    'default_tasks': ['test', 'smoke'],
}
"""DoIt Configuration Settings. Run with `poetry run doit`."""
