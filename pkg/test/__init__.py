from __future__ import annotations

import math
import typing

import numpy as np
import numpy.typing as npt

from jumpcontrol.linops import CMatrix, expm
from jumpcontrol.liouville import (
    steady_state,
    tilted_lindbladian,
    trace_functional,
    vectorize,
)
from jumpcontrol.model import ModelParams

# Default drive amplitudes and decay rate.
V_SYSTEM = ModelParams(omega01=1.0, omega02=0.1, gamma=4.0)

TWO_LEVEL = ModelParams(omega01=1.0, omega02=0.0, gamma=4.0)

DARK = ModelParams(omega01=1.0, omega02=0.1, gamma=0.0)


def random_matrix(rng: np.random.Generator, n: int, scale: float = 1.0) -> CMatrix:
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def random_density(rng: np.random.Generator, n: int = 3) -> CMatrix:
    """A full-rank density matrix drawn from the Ginibre ensemble."""
    g = random_matrix(rng, n)
    rho = g @ g.conj().T
    return typing.cast(CMatrix, rho / np.trace(rho))


def random_unitary(rng: np.random.Generator, n: int = 3) -> CMatrix:
    q, r = np.linalg.qr(random_matrix(rng, n))
    return typing.cast(CMatrix, q * (np.diag(r) / np.abs(np.diag(r))))


def log_partition(p: ModelParams, t: float, s: float) -> float:
    """``ln Tr[e^{t L_s} rho_ss]``: cumulant generating function of the
    emission count on ``[0, t]`` for a stationary start."""
    rho = expm(tilted_lindbladian(p, s), t) @ vectorize(steady_state(p))
    return math.log(float(np.vdot(trace_functional(), rho).real))


def finite_time_cumulants(p: ModelParams, t: float, h: float = 1e-3) -> tuple[float, float]:
    """Exact mean and variance of the emission count on ``[0, t]``."""
    plus = log_partition(p, t, h)
    minus = log_partition(p, t, -h)
    centre = log_partition(p, t, 0.0)
    return -(plus - minus) / (2 * h), (plus - 2 * centre + minus) / h**2


def second_differences(values: npt.ArrayLike) -> npt.NDArray[np.float64]:
    array = np.asarray(values, dtype=np.float64)
    return typing.cast(npt.NDArray[np.float64], array[2:] - 2 * array[1:-1] + array[:-2])
