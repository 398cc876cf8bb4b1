"""Exception hierarchy. Each family maps to one CLI exit code."""


class BotgraphError(Exception):
    exit_code = 1


class InputFormatError(BotgraphError):
    """Malformed or unreadable input (exit code 2)."""

    exit_code = 2


class ParseError(InputFormatError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class OrderingError(InputFormatError):
    pass


class PcapFormatError(InputFormatError):
    pass


class TruncationError(PcapFormatError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class DuplicateHostError(ParseError):
    pass


class ConfigurationError(BotgraphError):
    """Inputs are valid but the requested run cannot proceed (exit code 3)."""

    exit_code = 3


class SplitError(ConfigurationError):
    pass


class NumericError(BotgraphError):
    exit_code = 4


class ConvergenceError(NumericError):
    def __init__(self, message, residual=None, interval_index=None):
        self.residual = residual
        self.interval_index = interval_index
        super().__init__(message)

    def with_interval(self, index):
        err = ConvergenceError(f"interval {index}: {self}", self.residual, index)
        return err


class DivergenceError(NumericError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)
