class CocoNetError(Exception):
    pass


class InvalidInputError(CocoNetError, ValueError):
    pass


class TrainingDivergedError(CocoNetError, RuntimeError):
    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}: non-finite loss or parameters")


class FormatError(CocoNetError, ValueError):
    """Malformed file. ``offset`` is the byte position where parsing failed, when known."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ChecksumError(FormatError):
    pass


class VersionError(FormatError):
    pass


class PayloadLengthError(FormatError):
    pass


class ConventionError(FormatError):
    pass


class DatasetError(CocoNetError, OSError):
    pass
