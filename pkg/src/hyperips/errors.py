"""Exception and warning types raised across the package."""


class HyperIPSError(Exception):
    """Base class for all package errors."""


class SpecError(HyperIPSError, ValueError):
    """Invalid user input (rules, parameters, configs). CLI exit code 2."""


class CapExceeded(HyperIPSError):
    """A configured size cap was exceeded. CLI exit code 3."""


class DuplicateRule(SpecError):
    pass


class MalformedRule(SpecError):
    pass


class StateNotInSpace(SpecError, KeyError):
    pass


class OrderTooHigh(SpecError):
    pass


class ParameterDomain(SpecError):
    pass


class InfeasibleRegular(SpecError):
    pass


class EmptyGraph(SpecError):
    pass


class NegativeRate(MalformedRule):
    pass


class EmptySubset(SpecError):
    pass


class RequiresSymmetric(SpecError):
    pass


class RequiresUnweighted(SpecError):
    pass


class SpecInvalid(SpecError):
    pass


class TooLarge(CapExceeded):
    pass


class StateSpaceTooLarge(CapExceeded):
    pass


class MotifTooLarge(CapExceeded):
    pass


class StepUnderflow(HyperIPSError, ArithmeticError):
    """Adaptive step size fell below the representable resolution."""


class SimplexViolation(HyperIPSError, ArithmeticError):
    """A mean-field state left the probability simplex beyond repair tolerance."""


class NoConvergence(RuntimeWarning):
    """An iterative method hit its iteration cap before meeting its tolerance."""
