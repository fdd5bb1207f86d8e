"""Exception hierarchy shared by all mmfrec modules."""


class MMFError(Exception):
    """Base class for every error raised by mmfrec."""


class DataFormatError(MMFError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConsistencyError(DataFormatError):
    pass


class EmptyDatasetError(MMFError, ValueError):
    pass


class UndefinedDensityError(MMFError, ValueError):
    pass


class ConfigError(MMFError, ValueError):
    pass


class NoAttributeError(MMFError, ValueError):
    pass


class DivergenceError(MMFError, RuntimeError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
