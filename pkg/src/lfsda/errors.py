"""Exception hierarchy. Each class carries the CLI exit code for its category."""


class LfsdaError(Exception):
    exit_code = 1


class ConfigError(LfsdaError, ValueError):
    """Invalid parameters or configuration file."""

    exit_code = 2


class StructuralError(LfsdaError, ValueError):
    """Profiles or matrices with inconsistent dimensions."""

    exit_code = 2


class DomainError(LfsdaError, ValueError):
    """A function evaluated outside its domain."""

    exit_code = 2


class DataError(LfsdaError, ValueError):
    """Malformed input data file (PV CSV)."""

    exit_code = 3

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class SolverError(LfsdaError, RuntimeError):
    """Sub-problem solve failed to certify optimality.

    ``best`` holds the best iterate found and ``residual`` its KKT residual.
    """

    exit_code = 4

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class InfeasibleError(SolverError):
    """The feasible set is empty, e.g. after pinning market quantities."""

    def __init__(self, message, slot=None, agent=None):
        super().__init__(message)
        self.slot = slot
        self.agent = agent


class LatticeTooLarge(LfsdaError, ValueError):
    exit_code = 2

    def __init__(self, message, size):
        super().__init__(message)
        self.size = size


class VerificationError(LfsdaError):
    exit_code = 5
