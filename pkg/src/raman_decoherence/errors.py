"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter lies outside its allowed range."""


class DimensionError(ValueError):
    """Arrays or grids that must match do not."""


class StabilityError(ValueError):
    """Integration settings violate the stability bound."""


class StatisticalQualityError(ValueError):
    """Too few samples for a meaningful statistic."""


class InvalidWindowError(ValueError):
    """An integration window overlaps a component it must exclude."""


class UndefinedEstimateError(ValueError):
    """An estimator is undefined for the given sample (e.g. a zero mean)."""


class InvalidQueryError(KeyError):
    """A requested quantity is not available in a result."""


class DegenerateFitError(RuntimeError):
    """The normal matrix of a fit is singular.

    ``combination`` maps parameter names to the components of the
    (near-)null eigenvector, i.e. the direction the data do not constrain.
    """

    def __init__(self, message, combination=None):
        super().__init__(message)
        self.combination = dict(combination or {})


class UnresolvableScanWarning(UserWarning):
    """The scan window is narrower than the etalon linewidth."""


class ModelEvaluationError(RuntimeError):
    """A fit model failed while being evaluated at specific parameters."""
