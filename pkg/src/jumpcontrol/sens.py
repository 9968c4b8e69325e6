"""
Counting statistics of emissions in the s-ensemble.

The scaled cumulant generating function ``theta(s)`` of the number of
emissions is the dominant eigenvalue of the tilted generator; the activity
``k = -theta'`` and susceptibility ``chi = theta''`` follow by finite
differences and the rate function by Legendre transform.
"""

from __future__ import annotations

import functools
import logging
import math
import typing
import warnings

import numpy as np
import numpy.typing as npt
import scipy.optimize

from .exceptions import DomainError, ImaginaryResidueWarning
from .linops import dominant_eig
from .liouville import steady_state, tilted_lindbladian
from .model import ModelParams
from .util.sweep import ordered_map

log = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
ScgfFunction = typing.Callable[[float], float]

#: Finite-difference step for k and chi; halved once for Richardson.
DERIVATIVE_STEP = 1e-4

#: Default s interval for curves and for Legendre maximisation.
DEFAULT_S_BOUNDS = (-0.5, 2.0)
DEFAULT_S_POINTS = 241

_IMAGINARY_WARN = 1e-8


class LDCurve(typing.NamedTuple):
    grid: FloatArray
    theta: FloatArray
    k: FloatArray
    chi: FloatArray

    def rows(self) -> typing.Iterator[tuple[float, float, float, float]]:
        for s, theta, k, chi in zip(self.grid, self.theta, self.k, self.chi):
            yield float(s), float(theta), float(k), float(chi)


class RateFunction(typing.NamedTuple):
    k: FloatArray
    phi: FloatArray
    #: True where the maximising s sits on the scanned interval's edge.
    boundary: npt.NDArray[np.bool_]
    #: The maximising s per point, ``k = -theta'(s)`` at interior points.
    s: FloatArray

    def log_probability(self, t: float) -> FloatArray:
        """Large-deviation estimate of ``log P_t(K = k t)``."""
        return -t * self.phi


class Stencil(typing.NamedTuple):
    theta: float
    k: float
    chi: float


def default_s_grid() -> FloatArray:
    return np.linspace(*DEFAULT_S_BOUNDS, DEFAULT_S_POINTS)


def real_part(value: complex, label: str) -> float:
    """Drop the imaginary part of an eigenvalue that should be real."""
    if abs(value.imag) > _IMAGINARY_WARN:
        warnings.warn(
            f"{label} has imaginary residue {value.imag:.3e}",
            ImaginaryResidueWarning,
            stacklevel=3,
        )
    elif value.imag != 0.0:
        log.debug("%s imaginary residue %.3e", label, value.imag)
    return value.real


def scgf(p: ModelParams, s: float) -> float:
    """``theta(s)``: the largest-real-part eigenvalue of the tilted generator."""
    pair = dominant_eig(tilted_lindbladian(p, s), "largest-real-part")
    return real_part(pair.value, f"theta({s!r})")


def stencil(theta: ScgfFunction, s: float, h: float = DERIVATIVE_STEP) -> Stencil:
    """``theta``, ``-theta'`` and ``theta''`` at ``s`` from central differences.

    Differences at ``h`` and ``h/2`` are combined by one Richardson step,
    which cancels the leading ``h**2`` error of both derivatives.
    """
    centre = theta(s)
    outer = theta(s + h), theta(s - h)
    inner = theta(s + h / 2), theta(s - h / 2)

    d1_outer = (outer[0] - outer[1]) / (2 * h)
    d1_inner = (inner[0] - inner[1]) / h
    d2_outer = (outer[0] - 2 * centre + outer[1]) / h**2
    d2_inner = (inner[0] - 2 * centre + inner[1]) / (h / 2) ** 2

    first = (4 * d1_inner - d1_outer) / 3
    second = (4 * d2_inner - d2_outer) / 3
    return Stencil(centre, -first, second)


def activity(p: ModelParams, s: float, h: float = DERIVATIVE_STEP) -> float:
    return stencil(functools.partial(scgf, p), s, h).k


def susceptibility(p: ModelParams, s: float, h: float = DERIVATIVE_STEP) -> float:
    return stencil(functools.partial(scgf, p), s, h).chi


def stationary_activity(p: ModelParams) -> float:
    """Mean emission rate ``gamma <1|rho_ss|1>`` from the stationary state."""
    return p.gamma * float(steady_state(p)[1, 1].real)


def poisson_scgf(rate: float, s: float) -> float:
    """SCGF of a Poisson process with the given rate."""
    return rate * math.expm1(-s)


def _as_grid(values: npt.ArrayLike) -> FloatArray:
    grid = np.asarray(values, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise DomainError("grid must not be empty")
    if not np.all(np.isfinite(grid)):
        raise DomainError("grid values must be finite")
    if np.any(np.diff(grid) < 0):
        raise DomainError("grid must be sorted")
    return grid


def curve_from(
    theta: ScgfFunction,
    grid: npt.ArrayLike,
    h: float = DERIVATIVE_STEP,
    threads: int = 1,
) -> LDCurve:
    """Tabulate ``theta``, ``k`` and ``chi`` of any SCGF over ``grid``."""
    points = _as_grid(grid)
    stencils = ordered_map(lambda s: stencil(theta, float(s), h), points, threads)
    return LDCurve(
        points,
        np.array([st.theta for st in stencils]),
        np.array([st.k for st in stencils]),
        np.array([st.chi for st in stencils]),
    )


def ld_curve(
    p: ModelParams, grid: npt.ArrayLike | None = None, threads: int = 1
) -> LDCurve:
    return curve_from(
        functools.partial(scgf, p),
        default_s_grid() if grid is None else grid,
        threads=threads,
    )


def attainable_range(
    theta: ScgfFunction, s_bounds: tuple[float, float] = DEFAULT_S_BOUNDS
) -> tuple[float, float]:
    """Activities ``(k(s_max), k(s_min))`` reachable within ``s_bounds``."""
    lo, hi = s_bounds
    return stencil(theta, hi).k, stencil(theta, lo).k


def legendre_transform(
    theta: ScgfFunction,
    k_grid: npt.ArrayLike,
    s_bounds: tuple[float, float] = DEFAULT_S_BOUNDS,
    threads: int = 1,
) -> RateFunction:
    """``phi(k) = sup_s [-s k - theta(s)]`` with ``s`` restricted to ``s_bounds``.

    The objective is concave in ``s``, so a bounded golden-section/parabolic
    search finds the supremum. Points whose maximiser is pinned to either
    bound are flagged: their ``k`` is not attainable inside the interval and
    ``phi`` there is only a lower bound.
    """
    lo, hi = s_bounds
    if not lo < 0.0 < hi:
        raise DomainError(f"s_bounds must bracket 0, got {s_bounds!r}")
    ks = _as_grid(k_grid)
    edge = 1e-6 * (hi - lo)

    def maximise(k: float) -> tuple[float, float, bool]:
        result = scipy.optimize.minimize_scalar(
            lambda s: s * k + theta(s),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        s_star = float(result.x)
        pinned = s_star - lo <= edge or hi - s_star <= edge
        return -float(result.fun), s_star, pinned

    results = ordered_map(lambda k: maximise(float(k)), ks, threads)
    return RateFunction(
        ks,
        np.array([r[0] for r in results]),
        np.array([r[2] for r in results], dtype=bool),
        np.array([r[1] for r in results]),
    )


def rate_function(
    p: ModelParams,
    k_grid: npt.ArrayLike,
    s_bounds: tuple[float, float] = DEFAULT_S_BOUNDS,
    threads: int = 1,
) -> RateFunction:
    return legendre_transform(functools.partial(scgf, p), k_grid, s_bounds, threads)


def default_k_grid(
    theta: ScgfFunction,
    s_bounds: tuple[float, float] = DEFAULT_S_BOUNDS,
    num: int = 201,
) -> FloatArray:
    """Evenly spaced activities strictly inside the attainable range."""
    k_lo, k_hi = attainable_range(theta, s_bounds)
    margin = 0.01 * (k_hi - k_lo)
    return np.linspace(k_lo + margin, k_hi - margin, num)
