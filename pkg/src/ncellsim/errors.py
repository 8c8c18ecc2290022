"""Exception types shared across the package."""


class NcellsimError(Exception):
    """Base class for all package errors."""


class SpecFormatError(NcellsimError):
    """A spec or config file failed to parse or used unknown keys."""


class DuplicateIdError(NcellsimError):
    pass


class UnresolvedReferenceError(NcellsimError):
    pass


class DomainEmptyError(NcellsimError):
    pass


class ZeroDensityError(NcellsimError):
    pass


class InvalidCompartmentError(NcellsimError):
    """A compartment failed validation; carries the violation report."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(v.message for v in self.violations)
        super().__init__(f"compartment invalid: {lines}")


class NonFiniteStateError(NcellsimError):
    pass


class UnstableIntegrationError(NcellsimError):
    def __init__(self, t_ms: float, message: str = ""):
        self.t_ms = t_ms
        super().__init__(message or f"integration unstable at t={t_ms:.3f} ms (|V| > 200 mV)")


class MissingNeuronError(NcellsimError):
    pass


class ShapeMismatchError(NcellsimError):
    pass


class NyquistViolationError(NcellsimError):
    pass


class SignalTooShortError(NcellsimError):
    pass


class EmptyBandError(NcellsimError):
    pass


class TooFewActiveError(NcellsimError):
    pass


class InvalidFractionsError(NcellsimError):
    pass


class ForbiddenEdgeError(NcellsimError):
    pass
