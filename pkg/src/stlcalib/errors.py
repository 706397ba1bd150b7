"""Exception hierarchy; everything the CLI maps to exit status 1 derives from ``StlCalibError``."""


class StlCalibError(ValueError):
    pass


class DatasetError(StlCalibError):
    """Ingestion or dataset-level invariant failure."""


class ParameterError(StlCalibError):
    """A parameter outside its legal range."""


class FormulaSyntaxError(StlCalibError):
    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        self.position = position
        self.expected = tuple(expected)
        detail = f"{message} at position {position}"
        if expected:
            detail += f" (expected {' or '.join(expected)})"
        super().__init__(detail)


class EvaluationError(StlCalibError):
    """Robustness is undefined, e.g. a window that misses the signal entirely."""


class CalibrationError(StlCalibError):
    pass
