"""locpipe: configuration-first pipeline runner for reproducible localization experiments."""

__version__ = "0.1.0"
