"""Exception types and the process exit-code contract."""


class LocpipeError(Exception):
    """Base class for all locpipe errors."""


class ConfigError(LocpipeError):
    """Invalid pipeline/params configuration or bad CLI request. Exit code 2."""


class StoreError(LocpipeError):
    """Object store, lock file, or other filesystem failure. Exit code 3."""


class BuiltinError(LocpipeError):
    """A builtin stage rejected its inputs or parameters (stage fails, exit code 1)."""


EXIT_OK = 0
EXIT_STAGE_FAILURE = 1
EXIT_CONFIG = 2
EXIT_STORE = 3
