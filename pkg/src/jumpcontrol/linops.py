"""
Dense complex linear algebra for 3x3 states and 9x9 superoperators.

Matrices are ``numpy.complex128`` arrays in numpy's native row-major layout.
Nothing here knows how density matrices are vectorized; that convention
belongs to :mod:`jumpcontrol.liouville`.
"""

from __future__ import annotations

import logging
import math
import typing
import warnings

import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.sparse.linalg

from .exceptions import (
    ConvergenceError,
    DegeneracyWarning,
    DimensionError,
    DomainError,
    SingularMatrixError,
    SpectralError,
)

EigenMode = typing.Literal["largest-real-part", "largest-modulus"]

log = logging.getLogger(__name__)

CMatrix = npt.NDArray[np.complex128]

#: Problems up to this dimension use a full dense eigendecomposition.
DENSE_EIG_LIMIT = 64

_PIVOT_RTOL = 1e-14
_RESIDUAL_RTOL = 1e-9
_GAP_TOL = 1e-12
_NULL_RTOL = 1e-9
_STATE_TOL = 1e-10


class EigenPair(typing.NamedTuple):
    value: complex
    vector: CMatrix
    #: True when another eigenvalue ties with the selected one within 1e-12.
    degenerate: bool


def as_cmatrix(value: npt.ArrayLike, name: str = "matrix") -> CMatrix:
    """Convert ``value`` into a finite two-dimensional complex array."""
    array = np.asarray(value, dtype=np.complex128)
    if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise DomainError(f"{name} contains NaN or Inf entries")
    return array


def _as_square(value: npt.ArrayLike, name: str = "matrix") -> CMatrix:
    array = as_cmatrix(value, name)
    if array.shape[0] != array.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {array.shape}")
    return array


def expm(a: npt.ArrayLike, t: float = 1.0) -> CMatrix:
    """Return ``e^{tA}`` by scaling and squaring with a Pade core."""
    matrix = _as_square(a)
    if not math.isfinite(t):
        raise DomainError(f"t must be finite, got {t!r}")
    return typing.cast(CMatrix, scipy.linalg.expm(t * matrix))


def solve(a: npt.ArrayLike, b: npt.ArrayLike) -> CMatrix:
    """Solve ``AX = B`` by LU elimination with partial pivoting.

    ``b`` may be a matrix or a single vector; the result has the same shape.

    :raises SingularMatrixError: if a pivot falls below ``1e-14 * ||A||``.
    """
    matrix = _as_square(a)
    rhs = np.asarray(b, dtype=np.complex128)
    if rhs.ndim not in (1, 2) or rhs.shape[0] != matrix.shape[0]:
        raise DimensionError(
            f"right-hand side of shape {rhs.shape} does not match a {matrix.shape} system"
        )
    if not np.all(np.isfinite(rhs)):
        raise DomainError("right-hand side contains NaN or Inf entries")

    threshold = _PIVOT_RTOL * float(np.linalg.norm(matrix, np.inf))
    with warnings.catch_warnings():
        # Exactly zero pivots are reported below with their magnitude.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=False)
    pivot = float(np.min(np.abs(np.diag(lu))))
    if threshold == 0.0 or pivot < threshold:
        raise SingularMatrixError(pivot, threshold)
    return typing.cast(CMatrix, scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False))


def _select(values: npt.NDArray[np.complex128], mode: EigenMode) -> tuple[int, bool]:
    if mode == "largest-real-part":
        key = values.real
    elif mode == "largest-modulus":
        key = np.abs(values)
    else:
        raise ValueError(f"unknown eigenvalue ranking {mode!r}")

    top = float(key.max())
    candidates = np.flatnonzero(key >= top - _GAP_TOL * max(1.0, abs(top)))
    # Ties are broken towards real eigenvalues.
    index = min(
        (int(i) for i in candidates),
        key=lambda i: (abs(values[i].imag), -values[i].real),
    )
    return index, candidates.size > 1


def dominant_eig(a: npt.ArrayLike, mode: EigenMode = "largest-real-part") -> EigenPair:
    """Return the dominant eigenpair of ``a`` under the ranking ``mode``.

    ``"largest-real-part"`` suits generators, ``"largest-modulus"`` suits
    positive maps. Dense problems use LAPACK's shifted QR; larger ones go
    through ARPACK.
    """
    matrix = _as_square(a)
    size = matrix.shape[0]

    if size <= DENSE_EIG_LIMIT:
        try:
            values, vectors = scipy.linalg.eig(matrix, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise ConvergenceError("dense eigensolver failed", 0, math.nan) from e
    else:
        which = "LR" if mode == "largest-real-part" else "LM"
        try:
            values, vectors = scipy.sparse.linalg.eigs(matrix, k=2, which=which, tol=1e-14)
        except scipy.sparse.linalg.ArpackNoConvergence as e:
            raise ConvergenceError("ARPACK did not converge", size, math.nan) from e

    index, degenerate = _select(values, mode)
    value = complex(values[index])
    vector = np.asarray(vectors[:, index], dtype=np.complex128)

    residual = float(np.linalg.norm(matrix @ vector - value * vector))
    bound = _RESIDUAL_RTOL * float(np.linalg.norm(matrix)) * float(np.linalg.norm(vector))
    if residual > bound:
        raise ConvergenceError("eigenpair residual above tolerance", 0, residual)
    if degenerate:
        log.debug("Dominant eigenvalue %r is degenerate", value)
    return EigenPair(value, vector, degenerate)


def spectral_radius(a: npt.ArrayLike) -> float:
    matrix = _as_square(a)
    return float(np.max(np.abs(scipy.linalg.eigvals(matrix, check_finite=False))))


def krylov_basis(a: npt.ArrayLike, start: npt.ArrayLike, tol: float = 1e-10) -> CMatrix:
    """Orthonormal basis of the smallest ``A``-invariant subspace holding ``start``.

    Arnoldi with full re-orthogonalisation; the subspace is closed once the
    new direction is below ``tol * ||A||``.
    """
    matrix = _as_square(a)
    vector = np.asarray(start, dtype=np.complex128).reshape(-1)
    if vector.shape[0] != matrix.shape[0]:
        raise DimensionError("start vector does not match the operator")
    length = float(np.linalg.norm(vector))
    if length == 0.0:
        raise DomainError("start vector must be nonzero")

    scale = max(float(np.linalg.norm(matrix, 2)), np.finfo(float).tiny)
    basis = [vector / length]
    while len(basis) < matrix.shape[0]:
        w = matrix @ basis[-1]
        for _ in range(2):
            for q in basis:
                w = w - np.vdot(q, w) * q
        h = float(np.linalg.norm(w))
        if h <= tol * scale:
            break
        basis.append(w / h)
    return np.column_stack(basis)


def null_state(
    generator: npt.ArrayLike, reference: npt.ArrayLike | None = None
) -> CMatrix:
    """Stationary density matrix (vectorized) of a Lindblad-type generator.

    When the zero eigenvalue is degenerate the stationary state is not unique;
    the one returned is the long-time image of ``reference`` (by default the
    first basis state), and a :class:`DegeneracyWarning` is issued.

    :raises SpectralError: if no eigenvalue vanishes within tolerance or the
        result is not a valid density matrix.
    """
    matrix = _as_square(generator, "generator")
    size = matrix.shape[0]
    dim = math.isqrt(size)
    if dim * dim != size:
        raise DimensionError(f"generator of size {size} does not act on square matrices")

    values, left, right = scipy.linalg.eig(matrix, left=True, right=True, check_finite=False)
    moduli = np.abs(values)
    zero = np.flatnonzero(moduli <= _NULL_RTOL * max(1.0, float(np.linalg.norm(matrix))))
    if zero.size == 0:
        raise SpectralError(f"generator has no zero eigenvalue (smallest |λ|={moduli.min():.3e})")
    if zero.size > 1:
        warnings.warn(
            f"stationary state is {zero.size}-fold degenerate; "
            "returning the state reached from the reference",
            DegeneracyWarning,
            stacklevel=2,
        )

    if reference is None:
        start = np.zeros(size, dtype=np.complex128)
        start[0] = 1.0
    else:
        start = np.asarray(reference, dtype=np.complex128).reshape(-1)

    # Spectral projector onto the kernel applied to the reference.
    v = right[:, zero]
    w = left[:, zero]
    coefficients = solve(w.conj().T @ v, w.conj().T @ start)
    state = (v @ coefficients).reshape(dim, dim)

    trace = complex(np.trace(state))
    if abs(trace) == 0.0:
        raise SpectralError("stationary mode has zero trace")
    state = state / trace
    if float(np.max(np.abs(state - state.conj().T))) > _STATE_TOL:
        raise SpectralError("stationary mode is not Hermitian")
    state = 0.5 * (state + state.conj().T)
    if float(np.linalg.eigvalsh(state).min()) < -_STATE_TOL:
        raise SpectralError("stationary mode is not positive semidefinite")
    return state.reshape(-1)
