from abc import ABC
from typing import List, Optional

from loguru import logger


class HblException(Exception, ABC):
    """Base class for all exceptions raised by hblab"""

    def __init__(self, message):
        super(HblException, self).__init__(message)
        self.message = message

    def log_error(self):
        logger.error(self.message)
        if self.__cause__ is not None:
            logger.debug(f"The following exception was the direct cause of this exception:\n{self.__cause__}")


class UserException(HblException):
    """Base class for all exceptions raised for any reason not attributable to hblab code.
    For example, a point with the wrong dimension, a non-positive temperature, an invalid run configuration, ...
    """

    def __init__(self, message):
        super(UserException, self).__init__(message)


class InternalException(HblException):
    """Base class for all exceptions raised due to an hblab programming error"""

    def __init__(self, message):
        super(InternalException, self).__init__(message)


class ConfigurationException(UserException):
    """Raised when a run configuration cannot be parsed or does not validate"""

    def __init__(self, message, path: Optional[str] = None, line: Optional[int] = None):
        super(ConfigurationException, self).__init__(message)
        self.path = path
        self.line = line

    def log_error(self):
        anchor = ""
        if self.line is not None:
            anchor = f"line {self.line}: "
        elif self.path is not None:
            anchor = f"{self.path}: "
        logger.error(f"Invalid configuration: {anchor}{self.message}")


class NumericalException(HblException, ABC):
    """Base class for numerical procedures that tripped one of their own guards"""

    def __init__(self, message):
        super(NumericalException, self).__init__(message)


class QuadratureException(NumericalException):
    """Raised when a quadrature is not trustworthy (overflow, non-integrable integrand, domain too small)"""

    def __init__(self, message, boundary_ratio: Optional[float] = None):
        super(QuadratureException, self).__init__(message)
        self.boundary_ratio = boundary_ratio


class NegativeDensityException(NumericalException):
    def __init__(self, min_value: float, time: float):
        super().__init__(f"Density went negative ({min_value:.3e}) at t={time:.6g}")
        self.min_value = min_value
        self.time = time


class CflException(NumericalException):
    """Raised when an explicit scheme is asked to take a time step above its stability limit"""

    def __init__(self, requested_dt: float, max_dt: float):
        super().__init__(
            f"Explicit HJB step {requested_dt:.3e} exceeds the stability limit {max_dt:.3e}. "
            "Increase the number of steps or let the solver choose them"
        )
        self.requested_dt = requested_dt
        self.max_dt = max_dt


class PathExplosionException(NumericalException):
    def __init__(self, exploded: int, total: int, step: int, bound: float):
        super().__init__(f"{exploded} of {total} paths left the ball of radius {bound:.4g}, the first at step {step}; run aborted")
        self.exploded = exploded
        self.total = total
        self.step = step


class ChainDivergedException(NumericalException):
    def __init__(self, step: int, bound: float):
        super().__init__(f"Inner Langevin chain left the box |y| <= {bound:.4g} at step {step}")
        self.step = step


class MaskedNodeException(NumericalException):
    """Raised when a drift is requested at a point whose density nodes were masked"""

    def __init__(self, where: str):
        super().__init__(f"Score requested at masked grid nodes near {where}")


class PreconditionException(NumericalException):
    """Raised when the inputs of a numerical check do not satisfy its statistical precondition"""

    def __init__(self, message):
        super().__init__(message)


class CheckFailedException(HblException):
    """Raised when one or more scientific checks of an experiment fail"""

    def __init__(self, experiment: str, failed_checks: List[str]):
        super().__init__(f"Experiment {experiment} failed {len(failed_checks)} check(s)")
        self.experiment = experiment
        self.failed_checks = failed_checks

    def log_error(self):
        message = self.message
        for check in self.failed_checks:
            message += f"\n  - {check}"
        logger.error(message)
