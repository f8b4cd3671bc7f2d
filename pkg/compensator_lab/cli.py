"""Command line front end: run scenarios, verify stored reports and list the scenario defaults.

Exit status: 0 when the report passes, 1 when a metric or report failed, 2 for usage and configuration errors, 3 for
runtime errors. Every error also prints one line `compensator-lab: error=<kind> reason=<text>` to stderr.

"""

import argparse
import json
import sys
from pathlib import Path

from icecream import ic

from .cache_helpers import (INDEX_NAME, DBConnect, config_key, initialize_index, match_config_in_index,
                            pretty_dump_json, store_report)
from .lab_helpers import LOGGER, ConfigError, LabError, configure_logger
from .runner import run_scenario
from .scenarios import DEFAULTS, ScenarioReport, build_config

PROG = 'compensator-lab'

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

FLOAT_FORMAT = '%.10g'
"""Float format of every CSV table."""


class UsageError(LabError):
    """Invalid command line."""


class LabArgumentParser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting, so `main()` owns the exit status."""

    def error(self, message):
        raise UsageError(f'{message}. {self.format_usage().strip()}')


def make_parser():
    """Return the argument parser for all subcommands."""  # noqa: DAR201
    parser = LabArgumentParser(prog=PROG, description=__doc__.splitlines()[0])
    subparsers = parser.add_subparsers(dest='command', parser_class=LabArgumentParser)
    subparsers.required = True

    run = subparsers.add_parser('scenario', help='Run a scenario and write its report')
    run.add_argument('scenario', choices=list(DEFAULTS))
    run.add_argument('--seed', type=int, help='Master seed (unsigned 64-bit)')
    run.add_argument('--paths', type=int, help='Number of simulated paths')
    run.add_argument('--steps', type=int, help='Number of grid steps')
    run.add_argument('--outdir', type=Path, default=Path('lab_output'), help='Output directory')
    run.add_argument('--threads', type=int, default=1, help='Worker threads (results do not depend on it)')
    run.add_argument('--config', type=Path, help='JSON config document with "schema": 1')
    run.add_argument('--law', help='Inline Law JSON (dellacherie only)')
    run.add_argument('--reuse', action='store_true', help='Load an indexed report with the same config if present')

    verify = subparsers.add_parser('verify', help='Re-derive the verdicts of a stored report')
    verify.add_argument('--report', type=Path, required=True, help='Path to report.json')

    subparsers.add_parser('list', help='List scenarios and their defaults')
    return parser


def _load_json(text, label):
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f'{label} is not valid JSON: {err}') from err


def _read_config(path):
    if path is None:
        return None
    if not path.is_file():
        raise UsageError(f'Config file not found: {path}')
    return _load_json(path.read_text(), str(path))


def emit_plot_tables(report, outdir):
    """Write one CSV per curve as `<scenario>_<metric>.csv` with columns (t, observed, target, lo, hi).

    Args:
        report: ScenarioReport
        outdir: destination directory

    Returns:
        list: paths of the written files

    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, frame in sorted(report.curves.items()):
        csv_path = outdir / f'{report.scenario}_{name}.csv'
        frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
        paths.append(csv_path)
    return paths


def emit_row_tables(report, outdir):
    """Write the metric rows and the rows of every attached report.

    Args:
        report: ScenarioReport
        outdir: destination directory

    Returns:
        list: paths of the written files

    """
    outdir = Path(outdir)
    paths = []
    if report.metrics:
        metrics_path = outdir / f'{report.scenario}_metrics.csv'
        report.metrics_frame().to_csv(metrics_path, index=False, float_format=FLOAT_FORMAT)
        paths.append(metrics_path)
    attached = {**report.reports, **{f'control_{name}': rep for name, rep in report.controls.items()}}
    for name, rep in sorted(attached.items()):
        rows_path = outdir / f'{report.scenario}_{name}_rows.csv'
        rep.to_frame().to_csv(rows_path, index=False, float_format=FLOAT_FORMAT)
        paths.append(rows_path)
    for name, bundle in report.sample_paths.items():
        csv_path = outdir / f'{report.scenario}_{name}.csv'
        bundle.to_csv(csv_path)
        paths.append(csv_path)
    return paths


def _summarize(report, report_path):
    status = 'PASS' if report.overall_pass else 'FAIL'
    print(f'{report.scenario}: {status} ({report_path})')  # noqa: T001
    for flag in report.flags:
        print(f'  flag: {flag}')  # noqa: T001
    for name in report.failures():
        print(f'  failed: {name}')  # noqa: T001


def run_scenario_command(args):
    """Run (or reuse) a scenario and write its report, tables and index row.

    Args:
        args: parsed arguments of the `scenario` subcommand

    Returns:
        int: exit status

    """
    outdir = args.outdir
    configure_logger(outdir / 'logs', name=args.scenario)
    law = _load_json(args.law, '--law') if args.law is not None else None
    config = build_config(args.scenario, _read_config(args.config), seed=args.seed, paths=args.paths,
                          steps=args.steps, law=law)
    if args.threads < 1:
        raise UsageError(f'--threads must be at least 1. Found: {args.threads}')

    report_dir = outdir / config.scenario
    report_dir.mkdir(parents=True, exist_ok=True)
    report_path = report_dir / 'report.json'
    index = DBConnect(outdir / INDEX_NAME)
    initialize_index(index)
    key = config_key(config.to_json())

    matches = match_config_in_index(index, key) if args.reuse else []
    if matches:
        LOGGER.debug(f'Reusing {matches[0]["filename"]}')
        report = ScenarioReport.from_json(json.loads(Path(matches[0]['filename']).read_text()))
        if Path(matches[0]['filename']) != report_path.resolve():
            pretty_dump_json(report_path, report.to_json())
    else:
        report = run_scenario(config, threads=args.threads)
        store_report(index, config.scenario, key, report_path, report.to_json())
    emit_plot_tables(report, report_dir)
    emit_row_tables(report, report_dir)
    _summarize(report, report_path)
    return EXIT_PASS if report.overall_pass else EXIT_FAIL


def verify_command(args):
    """Re-derive the verdict of a stored report from its numbers.

    Args:
        args: parsed arguments of the `verify` subcommand

    Returns:
        int: exit status of the recomputed verdict

    """
    if not args.report.is_file():
        raise UsageError(f'Report not found: {args.report}')
    stored = _load_json(args.report.read_text(), str(args.report))
    report = ScenarioReport.from_json(stored).recompute()
    if report.overall_pass != stored.get('overall_pass'):
        LOGGER.warning(f'Stored verdict {stored.get("overall_pass")} disagrees with recomputed {report.overall_pass}')
        print(f'{report.scenario}: stored verdict disagrees with the recomputed one', file=sys.stderr)  # noqa: T001
    _summarize(report, args.report)
    return EXIT_PASS if report.overall_pass else EXIT_FAIL


def list_command(_args):
    """Print every scenario id with its defaults.

    Returns:
        int: exit status

    """
    for scenario, defaults in DEFAULTS.items():
        grid = f'{defaults["n_paths"]} paths, horizon {defaults["horizon"]:g}, {defaults["n_steps"]} steps'
        print(f'{scenario}: {grid}')  # noqa: T001
        print(f'  params: {json.dumps(defaults["params"], sort_keys=True)}')  # noqa: T001
        print(f'  tolerances: {json.dumps(defaults["tolerances"], sort_keys=True)}')  # noqa: T001
    return EXIT_PASS


COMMANDS = {
    'scenario': run_scenario_command,
    'verify': verify_command,
    'list': list_command,
}


def _report_error(kind, err):
    reason = ' '.join(str(err).split())
    print(f'{PROG}: error={kind} reason={reason}', file=sys.stderr)  # noqa: T001


def main(argv=None):
    """Run the command line.

    Args:
        argv: argument list without the program name. Default is `sys.argv[1:]`

    Returns:
        int: exit status

    """
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = make_parser().parse_args(argv)
        LOGGER.debug(ic.format(vars(args)))
        return COMMANDS[args.command](args)
    except UsageError as err:
        _report_error('usage', err)
        return EXIT_USAGE
    except ConfigError as err:
        _report_error('config', err)
        return EXIT_USAGE
    except Exception as err:
        LOGGER.exception('Unhandled error')
        _report_error('runtime', err)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
