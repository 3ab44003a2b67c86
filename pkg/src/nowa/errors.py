"""Exception hierarchy shared by all nowa modules."""


class NowaError(Exception):
    """Base class for every error raised by this package."""


class FormatError(NowaError, ValueError):
    """A file or in-memory value does not follow its declared format."""


class UnsupportedModeError(NowaError, ValueError):
    pass


class PsfClippingError(NowaError):
    """The cropped PSF window holds too little of the total energy."""


class DegeneratePsfError(NowaError, ValueError):
    pass


class DegenerateOperatorError(NowaError, ValueError):
    pass


class DegenerateSignatureError(NowaError):
    """The null space carries no usable signature energy."""


class EmbeddingError(NowaError):
    """Leakage stayed above budget after every gain reduction."""


class CalibrationError(NowaError, ValueError):
    pass


class DonorSizeError(NowaError, ValueError):
    pass


class BudgetError(NowaError, ValueError):
    pass


class ConfigError(NowaError, ValueError):
    pass
