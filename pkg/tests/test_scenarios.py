"""Test the scenarios.py file."""

import json

import pytest
from compensator_lab.lab_helpers import ConfigError
from compensator_lab.scenarios import (DEFAULTS, NOT_TOTALLY_INACCESSIBLE, RUNNERS, MetricRow, ScenarioReport,
                                       build_config)

from .configuration import TEST_DATA_DIR

DELLACHERIE_DOC = json.loads((TEST_DATA_DIR / 'dellacherie_config.json').read_text())
"""2000 paths, seed 7, law with an atom at 1 of mass 0.25 plus an exponential part."""


def _dumps(report):
    return json.dumps(report.to_json(), sort_keys=True)


def test_build_config_precedence():
    """Check that flags override the document, which overrides the defaults."""
    config = build_config('dellacherie', DELLACHERIE_DOC, seed=11)  # act

    assert config.master_seed == 11
    assert config.n_paths == 2000
    assert config.n_steps == DEFAULTS['dellacherie']['n_steps']
    assert config.params['curve_points'] == 12
    assert config.params['law'] == DELLACHERIE_DOC['params']['law']
    assert config.tolerances['z_threshold'] == 5.0
    assert config.tolerances['control_z'] == DEFAULTS['dellacherie']['tolerances']['control_z']
    assert build_config('dellacherie', DELLACHERIE_DOC, paths=5000).n_paths == 5000
    assert config.to_json()['schema'] == 1


def test_build_config_reload():
    """Check that a config document written by `to_json()` rebuilds the same config."""
    config = build_config('shrinkage', seed=3, paths=1500)

    again = build_config('shrinkage', config.to_json())  # act

    assert again == config


@pytest.mark.parametrize('scenario,document,overrides', [
    ('dellacherie', json.loads((TEST_DATA_DIR / 'unknown_key_config.json').read_text()), {}),
    ('dellacherie', {'n_paths': 2000}, {}),
    ('dellacherie', {'schema': 2}, {}),
    ('shrinkage', {'schema': 1, 'scenario': 'azema'}, {}),
    ('shrinkage', {'schema': 1, 'n_paths': 999}, {}),
    ('shrinkage', None, {'paths': 10}),
    ('shrinkage', None, {'law': {'atoms': [[1.0, 1.0]]}}),
    ('shrinkage', {'schema': 1, 'params': {'probability': 1.5}}, {}),
    ('shrinkage', {'schema': 1, 'tolerances': {'exact': -1.0}}, {}),
    ('dellacherie', None, {'law': {'atoms': [[1.0, 2.0]]}}),
    ('poisson-tilt', None, {'steps': 1}),
    ('lottery', None, {}),
])
def test_build_config_invalid(scenario, document, overrides):
    """Check that invalid documents and overrides raise ConfigError."""
    with pytest.raises(ConfigError):
        build_config(scenario, document, **overrides)  # act


@pytest.mark.parametrize('row,passed', [
    (MetricRow('close', 1.05, 1.0, 0.1), True),
    (MetricRow('far', 1.2, 1.0, 0.1), False),
    (MetricRow('below', 0.5, 1.0, 0.0, 'at_most'), True),
    (MetricRow('above', 1.5, 1.0, 0.0, 'at_most'), False),
    (MetricRow('large', 12.0, 10.0, 0.0, 'at_least'), True),
    (MetricRow('small', 3.0, 10.0, 0.0, 'at_least'), False),
    (MetricRow('same', 0.0, 0.0, 0.0, 'equals'), True),
    (MetricRow('differs', 1.0, 0.0, 0.0, 'equals'), False),
])
def test_metric_row_judge(row, passed):
    """Check each comparison."""
    result = row.judge()  # act

    assert result is passed
    assert row.passed is passed


def test_metric_row_invalid():
    """Check that unknown comparisons are rejected."""
    with pytest.raises(ConfigError):
        MetricRow('name', 1.0, 1.0, 0.0, 'roughly')  # act


def test_runners_cover_defaults():
    """Check that every scenario id has a runner."""
    assert set(RUNNERS) == set(DEFAULTS)


def test_dellacherie_with_atom():
    """Check the atom flag, the report layout and the deterministic rows of a small Dellacherie run."""
    config = build_config('dellacherie', DELLACHERIE_DOC, steps=300)

    report = RUNNERS['dellacherie'](config)  # act

    assert NOT_TOTALLY_INACCESSIBLE in report.flags
    assert set(report.reports) == {'minimal_filtration', 'poisson_kth_jump', 'gamma_minimal', 'marked_poisson',
                                   'ethier_kurtz'}
    assert set(report.controls) == {'zero_compensator', 'ethier_kurtz_tight_bound'}
    assert report.metric('gamma_dellacherie_vs_log_survival').passed
    assert report.metric('poisson_domination_max_excess').passed
    assert report.metric('control_zero_compensator_max_abs_z').passed
    assert set(report.curves) == {'compensator', 'gamma_compensator'}


def test_dellacherie_thread_independence():
    """Check that the report does not depend on the thread count."""
    config = build_config('dellacherie', DELLACHERIE_DOC, steps=300)

    threaded = RUNNERS['dellacherie'](config, threads=8)  # act

    assert _dumps(threaded) == _dumps(RUNNERS['dellacherie'](config, threads=1))


def test_certain_time_passes():
    """Check that a time equal to 1 almost surely has a zero martingale and is flagged."""
    config = build_config('dellacherie', DELLACHERIE_DOC, steps=300, law={'atoms': [[1.0, 1.0]]})

    report = RUNNERS['dellacherie'](config)  # act

    assert NOT_TOTALLY_INACCESSIBLE in report.flags
    assert all(row.z == 0 for row in report.reports['minimal_filtration'].rows)


def test_dellacherie_uniform_law():
    """Check that a law whose CDF reaches 1 inside the horizon runs to a report."""
    law = {'atoms': [], 'continuous': {'kind': 'uniform', 'low': 0.0, 'high': 1.0}}
    config = build_config('dellacherie', DELLACHERIE_DOC, steps=300, law=law)

    report = RUNNERS['dellacherie'](config)  # act

    assert NOT_TOTALLY_INACCESSIBLE not in report.flags
    assert report.reports['minimal_filtration'].overall_pass
    assert report.metric('control_zero_compensator_max_abs_z').passed
    assert 'compensator' in report.curves


def test_report_json_round_trip():
    """Check that a stored report reloads to the same document and the same recomputed verdicts."""
    report = RUNNERS['shrinkage'](build_config('shrinkage', paths=2000))

    loaded = ScenarioReport.from_json(json.loads(json.dumps(report.to_json())))  # act

    assert json.dumps(loaded.to_json(), sort_keys=True) == _dumps(report)
    assert loaded.recompute().overall_pass == report.overall_pass
    assert [row.passed for row in loaded.recompute().metrics] == [row.passed for row in report.metrics]
    with pytest.raises(ConfigError):
        ScenarioReport.from_json({**report.to_json(), 'schema': 2})


def test_shrinkage_small():
    """Check the exact rows of a small shrinkage run."""
    report = RUNNERS['shrinkage'](build_config('shrinkage', paths=2000))  # act

    for name in ('coarse_measurability_residual', 'control_unprojected_measurability_residual',
                 'projection_mean_preservation', 'projection_idempotence'):
        assert report.metric(name).passed, name
    assert set(report.controls) == {'coarse_unprojected', 'prior_mean'}


def test_poisson_tilt_small():
    """Check the exact rows of a small Poisson-tilt run."""
    config = build_config('poisson-tilt', paths=1000, steps=600)

    report = RUNNERS['poisson-tilt'](config)  # act

    assert report.metric('equal_rates_exact').passed
    assert report.metric('max_compensator_rate').passed
    assert 'mean_tilted_compensator' in report.curves


def test_counterexample_requires_fine_grid():
    """Check that the local-time scenario refuses coarse grids."""
    config = build_config('counterexample', paths=1000, steps=1024)

    with pytest.raises(ConfigError):
        RUNNERS['counterexample'](config)  # act


def test_counterexample_small():
    """Check the layout of a small local-time run."""
    document = {'schema': 1, 'params': {'trend_paths': 100}}
    config = build_config('counterexample', document, paths=1000, steps=4096)

    report = RUNNERS['counterexample'](config)  # act

    assert 'big_filtration' in report.reports
    assert {f'ethier_kurtz_local_time_K{bound:g}' for bound in (1, 2, 4)} <= set(report.controls)
    assert {'mean_local_time', 'law_of_R'} <= set(report.curves)
    assert report.metric('lebesgue_fraction').value < 1


def test_azema_horizon():
    """Check that the last-zero scenario needs horizon 1."""
    config = build_config('azema', {'schema': 1, 'horizon': 2.0}, paths=1000, steps=1024)

    with pytest.raises(ConfigError):
        RUNNERS['azema'](config)  # act


def test_azema_small():
    """Check the layout of a small last-zero run and its sample path table."""
    document = {'schema': 1, 'params': {'trend_paths': 100}}
    config = build_config('azema', document, paths=1000, steps=1024)

    report = RUNNERS['azema'](config)  # act

    assert set(report.reports) == {'jeulin_yor_expanded'}
    assert {'azema_formula_t025', 'azema_formula_t050', 'azema_formula_t075', 'last_zero_law'} <= set(report.curves)
    assert report.sample_paths['sample_path'].brownian.grid.n_steps == 1023


@pytest.mark.SLOW
@pytest.mark.parametrize('scenario', list(DEFAULTS))
def test_acceptance(scenario):
    """Check that every scenario passes at its default scale."""
    report = RUNNERS[scenario](build_config(scenario), threads=8)  # act

    assert report.overall_pass, report.failures()
