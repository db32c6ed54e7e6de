class NgrError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(NgrError, ValueError):
    pass


class DataError(NgrError, ValueError):
    """Malformed or missing input data (CSV parse failures, unseen categories)."""


class InvalidSpecError(NgrError, ValueError):
    pass


class UndefinedMetricError(NgrError, ValueError):
    pass


class NumericalDivergenceError(NgrError, ArithmeticError):
    """A loss term became NaN or infinite.

    ``term`` names the offending term; ``epoch`` is filled in by the trainer.
    """

    def __init__(self, term: str, epoch: int | None = None):
        self.term = term
        self.epoch = epoch
        where = f" at epoch {epoch}" if epoch is not None else ""
        super().__init__(f"non-finite value in loss term '{term}'{where}")
