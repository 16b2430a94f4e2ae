"""Exception hierarchy shared by every tubekit module."""


class TubekitError(Exception):
    """Base class for all errors raised by tubekit."""


class InvalidConfigError(TubekitError, ValueError):
    pass


class InvalidInputError(TubekitError, ValueError):
    pass


class GenerationFailedError(TubekitError):
    """Rejection sampling ran out of attempts."""

    def __init__(self, message, attempts):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class DegenerateTransformError(TubekitError, ValueError):
    def __init__(self, message, frame=None):
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)
        self.frame = frame


class TrainingDivergedError(TubekitError, FloatingPointError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


# storage errors

class FormatError(TubekitError):
    """A file does not follow its declared binary or text layout."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class ConfigParseError(TubekitError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"config parse error{where}: {message}")
        self.line = line
        self.column = column


class ConfigConstraintError(InvalidConfigError):
    def __init__(self, key_path, message):
        super().__init__(f"{key_path}: {message}")
        self.key_path = key_path
