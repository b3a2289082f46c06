"""Exception types raised across the package."""


class BPDLError(Exception):
    """Base class for all package errors."""


class NegativeRate(BPDLError, ValueError):
    pass


class EnvelopeViolated(BPDLError, ValueError):
    pass


class BadKernel(BPDLError, ValueError):
    pass


class EmptyPopulation(BPDLError):
    pass


class BudgetExceeded(BPDLError):
    pass


class IndexStale(BPDLError, AssertionError):
    pass


class StepTooLarge(BPDLError, ValueError):
    pass


class PoleAtZero(BPDLError, ZeroDivisionError):
    pass


class NoConvergence(BPDLError):
    pass


class NoSnapshot(BPDLError, KeyError):
    pass


class QuadratureFail(BPDLError):
    pass


class BadConfig(BPDLError, ValueError):
    """Invalid run configuration; ``field`` names the offending key path."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class UnknownExperiment(BPDLError, KeyError):
    def __init__(self, name: str, valid):
        self.name = name
        self.valid = sorted(valid)
        super().__init__(f"unknown experiment {name!r}; valid names: {', '.join(self.valid)}")

    def __str__(self):
        return self.args[0]
