"""Exception hierarchy for panel validation, estimation, and simulation."""


class RobustPanelError(Exception):
    """Base class for all errors raised by this package."""


class PanelValidationError(RobustPanelError):
    """Base class for malformed panel input."""


class UnbalancedPanelError(PanelValidationError):
    """Some individual is missing one or more periods."""


class DuplicateCellError(PanelValidationError):
    """An (id, time) cell appears more than once."""


class NonFiniteValueError(PanelValidationError):
    """A response or regressor value is NaN or infinite."""


class EstimationError(RobustPanelError):
    """Base class for estimation failures."""


class RankDeficientError(EstimationError):
    """Design matrix is numerically rank deficient."""


class TooFewIndividualsError(EstimationError):
    """Not enough cross-sectional units for the between regression."""


class NoWithinVariationError(EstimationError):
    """A regressor is constant over time within every individual."""


class RankDeficientUnderWeightsError(EstimationError):
    """Weighted design lost rank: the weights zeroed out too many rows."""


class NoConvergedRootError(EstimationError):
    """No bootstrap start of the reweighting iteration converged."""


class DomainError(RobustPanelError):
    """Argument outside the mathematical domain of a function."""


class InfeasibleContaminationError(RobustPanelError):
    """Requested outlier count is not representable by the scheme."""
