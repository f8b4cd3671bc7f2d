"""Run one lab scenario (poetry run python scripts/run_scenario.py scenario azema --paths 2000)."""

import sys

from compensator_lab import cli

if __name__ == '__main__':
    sys.exit(cli.main(sys.argv[1:]))
