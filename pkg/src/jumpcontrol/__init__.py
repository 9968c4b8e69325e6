"""
Emission statistics of a driven three-level V-system under catch-and-reverse
feedback control: quantum-jump sampling and exact large deviations.
"""

from __future__ import annotations

# Set default logging handler to avoid "No handler found" warnings.
import logging
import typing
import warnings
from logging import NullHandler

from . import exceptions
from ._version import __version__
from .hybrid import convergence_study, discrete_scgf, hybrid_step, kraus_pair
from .liouville import lindbladian, steady_state, tilted_lindbladian
from .mcwf import (
    TrajectoryRecord,
    TrajectorySampler,
    emission_histogram,
    occupations,
    sample_trajectory,
    survival,
)
from .model import ControlKind, ControlPolicy, ModelParams, StepScheme
from .sens import ld_curve, rate_function, scgf
from .xens import controlled_curve, controlled_scgf, g_of_x, renewal_scalar_scgf

__license__ = "MIT"
__version__ = __version__

__all__ = (
    "ControlKind",
    "ControlPolicy",
    "ModelParams",
    "StepScheme",
    "TrajectoryRecord",
    "TrajectorySampler",
    "add_stderr_logger",
    "controlled_curve",
    "controlled_scgf",
    "convergence_study",
    "disable_warnings",
    "discrete_scgf",
    "emission_histogram",
    "g_of_x",
    "hybrid_step",
    "kraus_pair",
    "ld_curve",
    "lindbladian",
    "occupations",
    "rate_function",
    "renewal_scalar_scgf",
    "sample_trajectory",
    "scgf",
    "steady_state",
    "survival",
    "tilted_lindbladian",
)

logging.getLogger(__name__).addHandler(NullHandler())


def add_stderr_logger(
    level: int = logging.DEBUG,
) -> logging.StreamHandler[typing.TextIO]:
    """
    Helper for quickly adding a StreamHandler to the logger. Useful for
    debugging.

    Returns the handler after adding it.
    """
    # This method needs to be in this __init__.py to get the __name__ correct.
    logger = logging.getLogger(__name__)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.debug("Added a stderr logging handler to logger: %s", __name__)
    return handler


# ... Clean up.
del NullHandler


def disable_warnings(category: type[Warning] = exceptions.JumpControlWarning) -> None:
    """
    Helper for quickly disabling all jumpcontrol warnings.
    """
    warnings.simplefilter("ignore", category)
