"""Exception types shared across the package."""


class KinesynthError(Exception):
    pass


class DimensionError(KinesynthError, ValueError):
    pass


class ParameterError(KinesynthError, ValueError):
    pass


class SchemaError(KinesynthError, ValueError):
    pass


class MalformedRowError(SchemaError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class StratificationError(KinesynthError, ValueError):
    def __init__(self, deficient: dict, n_folds: int):
        listing = ", ".join(f"{k} ({v})" for k, v in sorted(deficient.items()))
        super().__init__(
            f"classes with fewer than {n_folds} trials cannot be stratified: {listing}"
        )
        self.deficient = deficient


class DegenerateInputError(KinesynthError, ValueError):
    pass


class TrainingDivergedError(KinesynthError, RuntimeError):
    """Raised when a loss turns non-finite. ``snapshot`` holds the step's inputs."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot
