"""Exception hierarchy shared by the solver, diagnostics and CLI."""


class FrictionFlowError(Exception):
    """Base class for all package errors."""


class ResolutionError(FrictionFlowError, ValueError):
    """Requested Galerkin dimension cannot be resolved on the grid."""


class DimensionError(FrictionFlowError, ValueError):
    """Coefficient vector does not match the Galerkin space."""


class DomainError(FrictionFlowError, ValueError):
    """Argument outside the domain of a constitutive function."""


class SolverError(FrictionFlowError, RuntimeError):
    """Base class for failures of the time stepper."""


class PositivityError(SolverError):
    """Density lost positivity during a step.

    Attributes
    ----------
    node : tuple of int
        Grid index ``(j, i)`` of the most negative value.
    value : float
        The offending density value.
    suggested_dt : float
        A smaller time step to retry with.
    """

    def __init__(self, node, value, suggested_dt):
        self.node = tuple(int(k) for k in node)
        self.value = float(value)
        self.suggested_dt = float(suggested_dt)
        super().__init__(
            f"density lost positivity at node {self.node} (value {self.value:.3e}); "
            f"retry with dt <= {self.suggested_dt:.3e}"
        )


class MassMatrixError(SolverError):
    """Density-weighted mass matrix is not positive definite."""

    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"mass matrix not positive definite (min eigenvalue {self.min_eigenvalue:.3e})"
        )


class FixedPointError(SolverError):
    """Picard iteration did not reach the requested tolerance."""

    def __init__(self, iterations, last_change, last_ratio):
        self.iterations = int(iterations)
        self.last_change = float(last_change)
        self.last_ratio = float(last_ratio)
        super().__init__(
            f"fixed point not reached after {self.iterations} iterations "
            f"(last change {self.last_change:.3e}, contraction ratio {self.last_ratio:.3f}); "
            "reduce the time step"
        )


class BlowUpError(SolverError):
    """Velocity coefficients exceeded the blow-up guard."""


class ConjugateError(FrictionFlowError, RuntimeError):
    """Numerical maximisation for a convex conjugate did not converge."""

    def __init__(self, last_iterate, gap, message="conjugate ascent did not converge"):
        self.last_iterate = last_iterate
        self.gap = gap
        super().__init__(message)


class ConfigError(FrictionFlowError, ValueError):
    """Configuration could not be parsed or failed validation.

    ``violations`` lists every problem found, as ``(path, message)`` pairs.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.violations]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class ArtifactError(FrictionFlowError, OSError):
    """Run artifact is missing, truncated, corrupted or of an unsupported version."""
