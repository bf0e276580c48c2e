"""Exception types shared by all models.

The CLI maps ``ValidationError``/``DomainError`` to exit status 2 and
``ComputationError`` to exit status 3.
"""


class ValidationError(ValueError):
    """Input violates a type invariant (bad field value, wrong shape)."""


class DomainError(ValueError):
    """Input is well formed but outside the regime where an operation applies."""


class ComputationError(RuntimeError):
    """A numerical procedure failed to converge or hit a safety cap."""


class CutoffError(ComputationError):
    """Fock-space truncation leaks more probability than allowed."""
