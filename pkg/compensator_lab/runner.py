"""Run a scenario with logging to a per-scenario file."""

import time

from icecream import ic

from .lab_helpers import LOGGER, configure_logger
from .scenarios import RUNNERS


def run_scenario_unsafe(config, threads=1):
    """Dispatch the config to its scenario runner.

    Args:
        config: ScenarioConfig
        threads: worker threads

    Returns:
        ScenarioReport: verdict

    """
    LOGGER.info(f'Starting {config.scenario}: {config.n_paths} paths, {config.n_steps} steps, '
                f'seed {config.master_seed}')
    start = time.perf_counter()
    report = RUNNERS[config.scenario](config, threads=threads)
    LOGGER.info(f'Finished {config.scenario} in {time.perf_counter() - start:.1f}s, pass={report.overall_pass}')
    if not report.overall_pass:
        LOGGER.warning(ic.format(report.failures()))
    return report


def run_scenario(config, threads=1, log_dir=None):
    """Run a scenario and log any exception before re-raising it.

    Args:
        config: ScenarioConfig
        threads: worker threads
        log_dir: optional directory for `<scenario>.log`. When None, logging is left as configured

    Returns:
        ScenarioReport: verdict

    Raises:
        Exception: any error raised by the scenario, after it is logged

    """
    if log_dir is not None:
        configure_logger(log_dir, name=config.scenario)
    try:
        return run_scenario_unsafe(config, threads)
    except Exception:
        LOGGER.exception(f'Failed to run {config.scenario}')
        raise
