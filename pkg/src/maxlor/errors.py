"""Exception types.

``PhysicsAssertion`` subclasses mark failures of a measured physical
property (the CLI maps them to exit code 2); the others signal bad input.
"""


class MaxlorError(Exception):
    pass


class PhysicsAssertion(MaxlorError):
    """A run detected that a physical or numerical invariant broke."""


class VelocityOutOfRange(MaxlorError, ValueError):
    pass


class NoConvergence(PhysicsAssertion):
    pass


class ProjectionLost(PhysicsAssertion):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class StepUnstable(PhysicsAssertion):
    pass


class WrapGuard(MaxlorError):
    pass


class QuadratureNoConvergence(PhysicsAssertion):
    pass


class DenominatorVanishes(PhysicsAssertion):
    pass


class NonPositiveValues(MaxlorError, ValueError):
    pass


class WindowTooSmall(MaxlorError, ValueError):
    pass


class OmegaDegenerate(PhysicsAssertion):
    """The 3x3 block of the symplectic Gram matrix lost positive definiteness."""
