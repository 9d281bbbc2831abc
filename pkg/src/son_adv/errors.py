"""Exception hierarchy shared by every stage of the pipeline."""


class SonAdvError(Exception):
    """Base class for all errors raised by son_adv."""


class ShapeError(SonAdvError, ValueError):
    pass


class LabelError(SonAdvError, ValueError):
    pass


class ArchitectureError(SonAdvError, ValueError):
    pass


class DataError(SonAdvError, ValueError):
    pass


class DivergenceError(SonAdvError, FloatingPointError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


class UndefinedRateError(SonAdvError, ZeroDivisionError):
    pass


class EncodingError(SonAdvError, ValueError):
    pass


class ParseError(SonAdvError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class StratificationError(SonAdvError, ValueError):
    pass


class ConfigError(SonAdvError, ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class StageError(SonAdvError, RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
