"""PyTest configuration."""


def pytest_configure(config):
    """Register the custom markers.

    Args:
        config: pytest configuration

    """
    config.addinivalue_line('markers', 'SLOW: full-scale acceptance run (deselect with \'-m "not SLOW"\')')
