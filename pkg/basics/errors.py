class PowerPriorError(Exception):
    pass


class ConfigError(PowerPriorError, ValueError):
    pass


class SupportError(PowerPriorError, ValueError):
    pass


class UnsupportedError(PowerPriorError):
    pass


class NumericalError(PowerPriorError):
    pass


class DictionaryRangeError(NumericalError):
    pass


class DiagnosticsError(PowerPriorError):
    pass


class GridBuildError(PowerPriorError):
    """Evaluator failure while building a grid; carries the points visited so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIAGNOSTICS = 3
EXIT_NUMERICAL = 4


def exit_code_for(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DiagnosticsError):
        return EXIT_DIAGNOSTICS
    return EXIT_NUMERICAL
