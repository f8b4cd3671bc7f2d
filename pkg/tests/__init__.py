"""kitsu_lib test files."""
