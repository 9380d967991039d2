"""Exception types shared by the package."""


class ZyglabError(Exception):
    """Base class for every error raised by zyglab."""


class ParameterError(ZyglabError, ValueError):
    pass


class DimensionError(ZyglabError, ValueError):
    pass


class DataError(ZyglabError, ValueError):
    pass


class WeightError(ZyglabError, ValueError):
    pass


class GeometryError(ZyglabError, ValueError):
    pass


class ResolutionError(ZyglabError, ValueError):
    pass


class ConfigurationError(ZyglabError, ValueError):
    pass


class PreconditionError(ZyglabError, RuntimeError):
    pass


class SingularityError(ZyglabError, ArithmeticError):
    """Kernel evaluated on its singular set."""


class InsufficientDataError(ZyglabError, ValueError):
    pass
