"""Exception hierarchy shared by every module of the package."""


class NsquantError(Exception):
    """Base class for all package errors."""


class QuadratureError(NsquantError):
    pass


class InsufficientSupportError(NsquantError):
    """Too few observations carry positive kernel weight."""


class DegenerateDesignError(NsquantError):
    pass


class DegenerateWindowError(NsquantError):
    """Local linear smoothing weights have a vanishing denominator."""


class InsufficientDataError(NsquantError):
    pass


class SpecValidationError(NsquantError):
    """A process description violates a stability condition."""


class ParseError(NsquantError):
    pass
