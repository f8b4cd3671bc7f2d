"""Test the cli.py file."""

import filecmp
import json
import shutil

import pytest
from compensator_lab import cli
from compensator_lab.scenarios import DEFAULTS, NOT_TOTALLY_INACCESSIBLE, RUNNERS

from .configuration import TEMP_DIR, TEST_DATA_DIR

CONFIG = TEST_DATA_DIR / 'dellacherie_config.json'


def _run(outdir, *extra):
    return cli.main(['scenario', 'dellacherie', '--config', str(CONFIG), '--steps', '300', '--outdir', str(outdir),
                     *extra])


def _expected_status(report_path):
    return cli.EXIT_PASS if json.loads(report_path.read_text())['overall_pass'] else cli.EXIT_FAIL


@pytest.fixture()
def outdir():
    path = TEMP_DIR / 'cli_output'
    shutil.rmtree(path, ignore_errors=True)
    yield path
    shutil.rmtree(path, ignore_errors=True)


def test_scenario_writes_report(outdir):
    """Check the report, the flag for the atom and the plot tables."""
    status = _run(outdir)  # act

    report_path = outdir / 'dellacherie' / 'report.json'
    assert status == _expected_status(report_path)
    report = json.loads(report_path.read_text())
    assert report['schema'] == 1
    assert NOT_TOTALLY_INACCESSIBLE in report['flags']
    assert report['config']['n_paths'] == 2000
    assert (outdir / 'dellacherie' / 'dellacherie_compensator.csv').read_text().startswith('t,observed,target,lo,hi')
    assert (outdir / 'dellacherie' / 'dellacherie_metrics.csv').is_file()
    assert (outdir / 'dellacherie' / 'dellacherie_control_zero_compensator_rows.csv').is_file()
    assert (outdir / 'logs' / 'dellacherie.log').is_file()
    assert (outdir / cli.INDEX_NAME).is_file()


def test_scenario_rerun_is_byte_identical(outdir):
    """Check that two runs with the same config write identical files."""
    _run(outdir / 'first')

    _run(outdir / 'second', '--threads', '4')  # act

    first, second = outdir / 'first' / 'dellacherie', outdir / 'second' / 'dellacherie'
    names = sorted(path.name for path in first.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
    assert not mismatch and not errors
    assert 'report.json' in match


def test_scenario_reuse(outdir, monkeypatch):
    """Check that `--reuse` loads the indexed report instead of running."""
    status = _run(outdir)
    report_path = outdir / 'dellacherie' / 'report.json'
    stored = report_path.read_text()

    def fail(*_args, **_kwargs):
        raise AssertionError('scenario should not run')

    monkeypatch.setitem(RUNNERS, 'dellacherie', fail)

    reused = _run(outdir, '--reuse')  # act

    assert reused == status
    assert report_path.read_text() == stored


def test_verify(outdir, capsys):
    """Check that verify recomputes the stored verdict and reports a tampered one."""
    status = _run(outdir)
    report_path = outdir / 'dellacherie' / 'report.json'

    verified = cli.main(['verify', '--report', str(report_path)])  # act

    assert verified == status
    tampered = json.loads(report_path.read_text())
    tampered['overall_pass'] = not tampered['overall_pass']
    report_path.write_text(json.dumps(tampered))
    capsys.readouterr()
    assert cli.main(['verify', '--report', str(report_path)]) == status
    assert 'disagrees' in capsys.readouterr().err


def test_list(capsys):
    """Check that every scenario is listed."""
    status = cli.main(['list'])  # act

    assert status == cli.EXIT_PASS
    output = capsys.readouterr().out
    assert all(f'{scenario}:' in output for scenario in DEFAULTS)


@pytest.mark.parametrize('argv,kind', [
    (['scenario', 'unknown-name'], 'usage'),
    (['scenario', 'dellacherie', '--config', 'missing.json'], 'usage'),
    (['scenario', 'dellacherie', '--law', '{'], 'config'),
    (['scenario', 'shrinkage', '--law', '{"atoms": []}'], 'config'),
    (['scenario', 'shrinkage', '--paths', '10'], 'config'),
    (['verify', '--report', 'missing.json'], 'usage'),
    (['verify'], 'usage'),
    ([], 'usage'),
])
def test_usage_errors(argv, kind, capsys, outdir):
    """Check the exit status and the one-line error for invalid invocations."""
    if argv[:1] == ['scenario']:
        argv = [*argv, '--outdir', str(outdir)]

    status = cli.main(argv)  # act

    assert status == cli.EXIT_USAGE
    lines = capsys.readouterr().err.strip().splitlines()
    assert lines[-1].startswith(f'{cli.PROG}: error={kind} reason=')


def test_runtime_error(capsys, outdir, monkeypatch):
    """Check that unexpected errors exit with status 3."""
    def explode(*_args, **_kwargs):
        raise ValueError('boom')

    monkeypatch.setitem(RUNNERS, 'shrinkage', explode)

    status = cli.main(['scenario', 'shrinkage', '--outdir', str(outdir)])  # act

    assert status == cli.EXIT_RUNTIME
    assert capsys.readouterr().err.strip().endswith('error=runtime reason=boom')
