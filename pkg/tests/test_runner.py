"""Test the runner.py file."""

import pytest
from compensator_lab.runner import run_scenario
from compensator_lab.scenarios import RUNNERS, build_config

from .configuration import TEMP_DIR


def test_run_scenario_logs(monkeypatch):
    """Check that the scenario log records the failure before the error is raised again."""
    def explode(*_args, **_kwargs):
        raise ValueError('no paths today')

    monkeypatch.setitem(RUNNERS, 'poisson-tilt', explode)
    log_dir = TEMP_DIR / 'runner_logs'

    with pytest.raises(ValueError):
        run_scenario(build_config('poisson-tilt', paths=1000, steps=300), log_dir=log_dir)  # act

    text = (log_dir / 'poisson-tilt.log').read_text()
    assert 'Failed to run poisson-tilt' in text
    assert 'no paths today' in text
