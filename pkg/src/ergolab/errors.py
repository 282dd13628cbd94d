"""Exception hierarchy shared by all ergolab modules."""


class ErgolabError(Exception):
    """Base class for every error raised by ergolab."""


class DomainError(ErgolabError, ValueError):
    """A point or matrix lies outside the domain of the requested operation."""


class SpecError(ErgolabError, ValueError):
    """An invalid driver, space or map specification."""


class ContractViolation(ErgolabError, ValueError):
    """A caller-supplied function broke its documented contract."""


class NumericalError(ErgolabError, ArithmeticError):
    """Computation became too ill-conditioned to trust."""


class NoGoodTimes(ErgolabError):
    """No good time was found where at least one was required."""


class OutOfRange(ErgolabError, IndexError):
    """A finite table was queried beyond its length."""
