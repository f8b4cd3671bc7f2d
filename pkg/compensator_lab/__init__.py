"""compensator_lab package."""

from icecream import ic

ic.configureOutput(includeContext=True)

__version__ = '0.0.1'
