"""Exception hierarchy. Each family maps to one CLI exit code."""


class FewShotError(Exception):
    exit_code = 1


class DataError(FewShotError):
    """Malformed input data: parse, dimension, label, role, capacity, graph topology."""

    exit_code = 1


class ConfigError(FewShotError, ValueError):
    exit_code = 2


class NumericalError(FewShotError, ArithmeticError):
    exit_code = 3
