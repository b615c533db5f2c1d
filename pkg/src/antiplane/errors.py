"""Exception hierarchy shared by every module of the package."""


class AntiplaneError(Exception):
    """Base class for all errors raised by :mod:`antiplane`."""


class FieldError(AntiplaneError, ValueError):
    """A grid or field violates its structural invariants."""


class EnergyOverflow(AntiplaneError, OverflowError):
    """An exponential argument exceeded the configured cap."""


class NonReal(AntiplaneError, ValueError):
    """A real power of a negative base has no real value."""


class DomainError(AntiplaneError, ValueError):
    """Argument outside the domain of a conjugate energy."""


class SolveFailure(AntiplaneError):
    """A linear solve did not reach the requested residual."""


class DegenerateInput(AntiplaneError, ValueError):
    """Parameters make the requested equation degenerate."""


class NoRealRoot(AntiplaneError):
    """The dual algebraic equation has no real root."""


class UnexpectedRoot(NoRealRoot):
    """Real roots were found where none are expected (p < 1/2).

    The roots found are kept on ``roots`` so they can be inspected.
    """

    def __init__(self, message, roots=()):
        super().__init__(message)
        self.roots = tuple(roots)


class NodeSolveError(AntiplaneError):
    """Per-node failures collected while solving a whole field."""

    def __init__(self, failures):
        self.failures = list(failures)
        head = "; ".join(f"({x:.6g}, {y:.6g}): {err}" for x, y, err in self.failures[:5])
        more = "" if len(self.failures) <= 5 else f" ... and {len(self.failures) - 5} more"
        super().__init__(f"{len(self.failures)} node(s) failed: {head}{more}")


class DivisionNearZero(AntiplaneError, ZeroDivisionError):
    """A dual stress is too close to zero where the shear stress is not."""


class IncompatibleField(AntiplaneError):
    """The compatibility residual exceeds the acceptance threshold."""


class InvalidRoot(AntiplaneError, ValueError):
    """A supplied dual root does not satisfy its equation."""


class NoConvergence(AntiplaneError):
    """An iterative minimizer hit its iteration cap."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EigenFailure(AntiplaneError):
    """Eigendecomposition of a tensor failed or the tensor is not PSD."""


class SingularRoot(AntiplaneError, ZeroDivisionError):
    """A tensor root is not invertible."""


class ConfigError(AntiplaneError):
    """Invalid CLI configuration document."""
