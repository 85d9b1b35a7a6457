"""Data loading, configuration, metrics and the command line."""
