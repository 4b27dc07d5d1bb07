"""Exception types shared across the package."""


class DiatomicVlasovError(Exception):
    """Base class for all package errors."""


class DomainError(DiatomicVlasovError):
    """An argument lies outside the bond-length domain (0, epsilon)."""


class QuadratureError(DiatomicVlasovError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class RangeError(DiatomicVlasovError):
    """A requested potential level exceeds the supremum on the branch."""


class ToleranceError(DiatomicVlasovError):
    """A bracketing root search could not establish or shrink a bracket."""


class EmptyEnsembleError(DiatomicVlasovError):
    """An operation that needs particles received an empty ensemble."""


class StepUnderflowError(DiatomicVlasovError):
    """Step halving reached dt_min with the bond length still leaving the
    guard band.  Carries the offending state for post-mortem inspection."""

    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


class FieldGapError(DiatomicVlasovError):
    """A field provider lacks snapshots covering the requested interval."""


class SegmentOutOfRangeError(DiatomicVlasovError):
    """A diagnostic segment lies outside the sampled path range."""


class InvalidCError(DiatomicVlasovError):
    """The chosen field constant violates a certificate precondition."""


class NoConfinementError(DiatomicVlasovError):
    """The potential never reaches the required energy level, so no
    confinement interval exists (finite-well custom models)."""


class VacuousBoundError(DiatomicVlasovError):
    """A bound's hypothesis fails (nonpositive denominator); the bound is
    vacuous and deliberately not folded into pass/fail logic."""


class ConfigError(DiatomicVlasovError):
    """A run configuration is malformed or violates an invariant."""
