"""Exception hierarchy shared across the package."""


class NLCancelError(Exception):
    """Base class for all package errors."""


class InputError(NLCancelError, ValueError):
    """Malformed or inconsistent user input (shapes, missing channels)."""


class TransformationError(NLCancelError):
    """A dictionary entry cannot be Taylor-expanded at the origin."""


class DivergenceError(NLCancelError):
    """A simulated trajectory left the admissible state range."""

    def __init__(self, step, norm):
        super().__init__(f"state norm {norm:.3g} exceeded 1e6 at step {step}")
        self.step = step
        self.norm = norm


class InfeasibleError(NLCancelError):
    """The semidefinite program has no feasible point."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class SolverError(NLCancelError):
    """The conic backend failed without an infeasibility certificate."""


class CertificateRefused(NLCancelError):
    """A region certificate failed a containment requirement."""

    def __init__(self, message, violating_points=None):
        super().__init__(message)
        self.violating_points = violating_points
