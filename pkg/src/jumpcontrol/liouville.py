"""
Superoperators of the V-system as 9x9 matrices.

Density matrices are vectorized by stacking columns, so that
``vec(A rho B) == kron(B.T, A) @ vec(rho)``. Every other module goes
through :func:`vectorize` and :func:`devectorize`.
"""

from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

from .exceptions import DimensionError, DomainError
from .linops import CMatrix, as_cmatrix, expm, null_state
from .model import DIMENSION, ModelParams, build_jump, effective_hamiltonian

__all__ = (
    "CONVENTION",
    "SuperOp",
    "devectorize",
    "identity_superop",
    "jump_superop",
    "lindbladian",
    "no_jump_generator",
    "propagator",
    "steady_state",
    "tilted_lindbladian",
    "trace_functional",
    "unitary_superop",
    "vectorize",
)

CONVENTION = "column-stacking"

#: A 9x9 matrix acting on column-stacked density matrices.
SuperOp = CMatrix

_SIZE = DIMENSION * DIMENSION


def vectorize(rho: npt.ArrayLike) -> CMatrix:
    matrix = as_cmatrix(rho, "rho")
    if matrix.shape != (DIMENSION, DIMENSION):
        raise DimensionError(f"expected a 3x3 matrix, got shape {matrix.shape}")
    return matrix.reshape(-1, order="F")


def devectorize(vector: npt.ArrayLike) -> CMatrix:
    array = np.asarray(vector, dtype=np.complex128).reshape(-1)
    if array.shape[0] != _SIZE:
        raise DimensionError(f"expected a vector of length {_SIZE}, got {array.shape[0]}")
    return array.reshape((DIMENSION, DIMENSION), order="F")


def trace_functional() -> CMatrix:
    """``vec(I)``; ``vdot(vec(I), v)`` is the trace of ``devectorize(v)``."""
    return vectorize(np.eye(DIMENSION))


def identity_superop() -> SuperOp:
    return np.eye(_SIZE, dtype=np.complex128)


def _left(a: CMatrix) -> SuperOp:
    return np.kron(np.eye(DIMENSION), a)


def _right(b: CMatrix) -> SuperOp:
    return np.kron(b.T, np.eye(DIMENSION))


def unitary_superop(u: npt.ArrayLike) -> SuperOp:
    """``rho -> U rho U^dagger``."""
    matrix = as_cmatrix(u, "U")
    return np.kron(matrix.conj(), matrix)


def jump_superop(p: ModelParams) -> SuperOp:
    """``rho -> J rho J^dagger``."""
    j = build_jump(p)
    return np.kron(j.conj(), j)


def no_jump_generator(p: ModelParams) -> SuperOp:
    """``rho -> -i[H, rho] - 1/2 {J^dagger J, rho}``.

    Written through ``H_eff`` as ``-i H_eff rho + i rho H_eff^dagger``.
    """
    h_eff = effective_hamiltonian(p)
    return -1j * _left(h_eff) + 1j * _right(h_eff.conj().T)


def lindbladian(p: ModelParams) -> SuperOp:
    return jump_superop(p) + no_jump_generator(p)


def tilted_lindbladian(p: ModelParams, s: float) -> SuperOp:
    """``R + e^{-s} J``; its dominant eigenvalue is the SCGF of emissions."""
    if not math.isfinite(s):
        raise DomainError(f"s must be finite, got {s!r}")
    return no_jump_generator(p) + math.exp(-s) * jump_superop(p)


def propagator(generator: SuperOp, t: float) -> SuperOp:
    return expm(generator, t)


def steady_state(p: ModelParams) -> CMatrix:
    """Stationary density matrix of the master equation (3x3)."""
    return devectorize(null_state(lindbladian(p), vectorize(np.diag([1.0, 0.0, 0.0]))))

