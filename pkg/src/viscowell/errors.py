"""Exception types raised by viscowell."""


class ViscowellError(Exception):
    """Base class for all package errors."""


class ConfigError(ViscowellError):
    """Problem document failed schema or consistency validation."""


class NonPositiveParameter(ViscowellError):
    pass


class NonIntegrableKernel(ViscowellError):
    pass


class UnclassifiableKernel(ViscowellError):
    pass


class InvalidSource(ViscowellError):
    pass


class AssumptionViolated(ViscowellError):
    pass


class ShapeMismatch(ViscowellError):
    pass


class InconsistentG(ViscowellError):
    """d0 and G(y0) disagree; indicates a bug rather than bad input."""


class Inapplicable(ViscowellError):
    """The requested constant is not defined for this source/kernel pair."""


class ZeroField(ViscowellError):
    pass


class InsufficientDecay(ViscowellError):
    pass


class NotInBlowupRegime(ViscowellError):
    pass
