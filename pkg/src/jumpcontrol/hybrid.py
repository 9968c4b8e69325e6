"""
Discrete-time Markovian form of repeated control with a classical clock.

Time advances in steps ``dt`` with Kraus operators ``K0`` (no emission) and
``K1`` (emission). An ``n``-state controller with ``n = delta_t / dt`` counts
steps since the last emission and fires the control unitary when it wraps
around. The controller stays classical, so the joint state is a list of ``n``
unnormalised 3x3 blocks, one per clock value, and the tilted step map acts
block-wise.

Two step schemes are available. :attr:`StepScheme.FORWARD` is the plain pair
``K0 = e^{-i dt H} sqrt(1 - dt J^dag J)``, ``K1 = e^{-i dt H} sqrt(dt) J``; it
needs ``dt < 1 / gamma`` and converges at first order. :attr:`StepScheme.SYMMETRIC`
wraps the decay and the emission in half steps of drive, so emissions and
pulses sit mid-step and the pulse fires exactly ``delta_t`` after an emission.
It is complete for every ``dt`` and converges at second order.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import logging
import math
import typing

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .exceptions import AlignmentError, ConvergenceError, DivergenceError, DomainError, SpectralError
from .linops import CMatrix, expm, krylov_basis, solve, spectral_radius
from .liouville import SuperOp, devectorize, identity_superop, trace_functional, unitary_superop, vectorize
from .model import (
    DIMENSION,
    ControlPolicy,
    ModelParams,
    StepScheme,
    basis_state,
    build_hamiltonian,
    build_jump,
    control_unitary,
)
from .sens import real_part
from .util.sweep import ordered_map
from .xens import DIVERGENCE_MARGIN, controlled_scgf, solve_decreasing

log = logging.getLogger(__name__)

#: Default steps as fractions of ``delta_t``: ``delta_t / 8`` down to ``delta_t / 64``.
DEFAULT_STEP_DIVISORS = (8, 16, 32, 64)

#: Convergence order in ``dt`` of each scheme.
SCHEME_ORDER = {StepScheme.SYMMETRIC: 2, StepScheme.FORWARD: 1}

_ALIGNMENT_RTOL = 1e-9
_RELATIVE_FLOOR = 1e-12
_EIGEN_RTOL = 1e-8

BlockState = npt.NDArray[np.complex128]


class KrausPair(typing.NamedTuple):
    k0: CMatrix
    k1: CMatrix


class WrapKraus(typing.NamedTuple):
    """Kraus operators of the step in which the clock wraps around."""

    #: No emission; contains the control unitary.
    stay: CMatrix
    #: One emission each; they all land in ``|0>`` before the last half step.
    emit: tuple[CMatrix, ...]


def _check_step(dt: float) -> None:
    if not math.isfinite(dt) or dt <= 0:
        raise DomainError(f"dt must be positive and finite, got {dt!r}")


def kraus_pair(p: ModelParams, dt: float) -> KrausPair:
    """``K0 = e^{-i dt H} sqrt(1 - dt J^dag J)`` and ``K1 = e^{-i dt H} sqrt(dt) J``.

    :raises DomainError: unless ``0 < dt < 1 / gamma``.
    """
    _check_step(dt)
    if p.gamma * dt >= 1.0:
        raise DomainError(f"dt={dt!r} must be below 1/gamma={1.0 / p.gamma!r}")

    j = build_jump(p)
    unitary = expm(-1j * build_hamiltonian(p), dt)
    values, vectors = scipy.linalg.eigh(np.eye(DIMENSION) - dt * (j.conj().T @ j))
    root = (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T
    return KrausPair(unitary @ root, math.sqrt(dt) * (unitary @ j))


def _emission_weight(p: ModelParams, dt: float) -> float:
    # (1 - e^{-gamma dt}) / gamma, the squared emission amplitude per unit of J
    return -math.expm1(-p.gamma * dt) / p.gamma if p.gamma > 0.0 else dt


def split_kraus_pair(p: ModelParams, dt: float) -> KrausPair:
    """``K0 = V e^{-dt J^dag J / 2} V`` and ``K1 = V sqrt((1 - e^{-gamma dt}) / gamma) J V``.

    ``V = e^{-i dt H / 2}``. The pair is complete for every ``dt > 0``.
    """
    _check_step(dt)
    j = build_jump(p)
    half = expm(-1j * build_hamiltonian(p), 0.5 * dt)
    decay = expm(-0.5 * (j.conj().T @ j), dt)
    return KrausPair(half @ decay @ half, math.sqrt(_emission_weight(p, dt)) * (half @ j @ half))


def _wrap_kraus(p: ModelParams, unitary: CMatrix, dt: float, scheme: StepScheme, pair: KrausPair) -> WrapKraus:
    if scheme is StepScheme.FORWARD:
        return WrapKraus(unitary @ pair.k0, (pair.k1,))
    # The pulse sits between two half decays; an emission in the first half
    # resets the clock and skips it.
    j = build_jump(p)
    half = expm(-1j * build_hamiltonian(p), 0.5 * dt)
    decay = expm(-0.25 * (j.conj().T @ j), dt)
    emit = math.sqrt(_emission_weight(p, 0.5 * dt)) * j
    return WrapKraus(
        half @ decay @ unitary @ decay @ half,
        (half @ emit @ half, half @ emit @ unitary @ decay @ half),
    )


def block_state(n: int, rho: npt.ArrayLike | None = None, block: int = 0) -> BlockState:
    """Hybrid state with ``rho`` (default ``|0><0|``) in a single clock block."""
    blocks = np.zeros((n, DIMENSION, DIMENSION), dtype=np.complex128)
    blocks[block] = np.diag([1.0, 0.0, 0.0]) if rho is None else np.asarray(rho, dtype=np.complex128)
    return blocks


def total_trace(blocks: BlockState) -> float:
    return float(np.einsum("lii->", blocks).real)


class HybridStepMap:
    """One tilted step ``T_s = K0(.) + e^{-s} K1(.)`` of the hybrid system.

    Block ``l`` moves to ``l + 1`` under ``K0``; block ``n - 1`` wraps to block
    ``0`` through the pulse; emissions from every block land in block ``0``
    weighted by ``e^{-s}``, always in the state :attr:`landing`. The map is
    applied block-wise and never assembled as a matrix.
    """

    def __init__(
        self,
        p: ModelParams,
        policy: ControlPolicy,
        dt: float,
        s: float,
        scheme: StepScheme = StepScheme.SYMMETRIC,
    ) -> None:
        if not policy.unbounded:
            raise DomainError(f"the hybrid controller needs unbounded repetition, got {policy!r}")
        if not math.isfinite(s):
            raise DomainError(f"s must be finite, got {s!r}")
        assert policy.delta_t is not None
        ratio = policy.delta_t / dt
        n = round(ratio)
        if n < 2 or abs(ratio - n) > _ALIGNMENT_RTOL * max(1.0, ratio):
            raise AlignmentError(policy.delta_t, dt)

        self.params = p
        self.policy = policy
        self.n = n
        self.dt = dt
        self.s = s
        self.scheme = StepScheme(scheme)
        if self.scheme is StepScheme.FORWARD:
            self.kraus = kraus_pair(p, dt)
            drift = expm(-1j * build_hamiltonian(p), dt)
        else:
            self.kraus = split_kraus_pair(p, dt)
            drift = expm(-1j * build_hamiltonian(p), 0.5 * dt)
        self.wrap = _wrap_kraus(p, control_unitary(policy, p), dt, self.scheme, self.kraus)
        ket = drift @ basis_state(0)
        #: Post-emission state at the end of the emitting step.
        self.landing: CMatrix = np.outer(ket, ket.conj())
        self._weight = math.exp(-s)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, dt={self.dt!r}, s={self.s!r}, scheme={self.scheme.value!r})"

    def apply(self, blocks: BlockState) -> BlockState:
        k0, k1 = self.kraus
        stay = self.wrap.stay
        image = np.empty_like(blocks)
        image[1:] = k0 @ blocks[:-1] @ k0.conj().T
        image[0] = stay @ blocks[-1] @ stay.conj().T
        emitted = k1 @ blocks[:-1].sum(axis=0) @ k1.conj().T
        for op in self.wrap.emit:
            emitted += op @ blocks[-1] @ op.conj().T
        image[0] += self._weight * emitted
        return image

    def __call__(self, blocks: BlockState) -> BlockState:
        return self.apply(blocks)


def hybrid_step(
    p: ModelParams,
    policy: ControlPolicy,
    dt: float,
    s: float,
    scheme: StepScheme = StepScheme.SYMMETRIC,
) -> HybridStepMap:
    return HybridStepMap(p, policy, dt, s, scheme)


class DiscreteRenewal:
    """Renewal equation of the step map on clock block ``0``.

    Every emission lands in block ``0`` in the same state, so the dominant
    eigenvalue ``e^{theta dt}`` of ``T_s`` on the sector emissions feed solves
    ``e^{-s} w(theta) = 1``, where ``w(theta)`` is the discrete Laplace transform
    of the weight carried from one emission to the next. ``w`` is decreasing
    and is inverted like ``g(x)`` in the x-ensemble.
    """

    def __init__(self, step: HybridStepMap) -> None:
        self.step = step
        n = step.n
        advance = unitary_superop(step.kraus.k0)
        trace_row = trace_functional().conj()
        ordinary = trace_row @ unitary_superop(step.kraus.k1)

        # rows[l] @ rho: weight emitted during the step out of block l,
        # for rho in block 0.
        rows = np.empty((n, DIMENSION * DIMENSION), dtype=np.complex128)
        power = identity_superop()
        for l in range(n - 1):
            rows[l] = ordinary @ power
            power = advance @ power
        wrapped = sum((unitary_superop(op) for op in step.wrap.emit), np.zeros_like(power))
        rows[n - 1] = trace_row @ wrapped @ power
        self._rows = rows
        self._advance = advance
        #: Block 0 back to block 0 without emission.
        self.cycle: SuperOp = unitary_superop(step.wrap.stay) @ power

        self._landing = vectorize(step.landing)
        self._basis = krylov_basis(self.cycle, self._landing)
        self._restricted = self._basis.conj().T @ self.cycle @ self._basis
        self._radius = spectral_radius(self._restricted)

    @property
    def abscissa(self) -> float:
        """Left edge of the ``theta`` domain of ``w``."""
        if self._radius <= 0.0:
            return -math.inf
        return math.log(self._radius) / (self.step.n * self.step.dt)

    def _head(self, theta: float) -> CMatrix:
        # (I - e^{-n dt theta} C)^{-1} |landing>> on the reachable sector
        decay = math.exp(-self.step.n * self.step.dt * theta)
        radius = decay * self._radius
        if radius >= 1.0 - DIVERGENCE_MARGIN:
            raise DivergenceError(theta, radius)
        size = self._restricted.shape[0]
        coefficients = solve(
            np.eye(size, dtype=np.complex128) - decay * self._restricted,
            self._basis.conj().T @ self._landing,
        )
        return self._basis @ coefficients

    def weight(self, theta: float) -> float:
        powers = np.exp(-self.step.dt * theta * np.arange(1, self.step.n + 1))
        value = powers @ (self._rows @ self._head(theta))
        return real_part(complex(value), f"discrete renewal weight at theta={theta!r}")

    def g(self, theta: float) -> float:
        value = self.weight(theta)
        if not value > 0.0:
            raise SpectralError(f"discrete renewal weight is not positive at theta={theta!r}")
        return math.log(value)

    def invert(self, s: float) -> float:
        if not math.isfinite(s):
            raise DomainError(f"s must be finite, got {s!r}")
        return solve_decreasing(lambda theta: self.g(theta) - s, self.abscissa, s)

    def eigenvector(self, theta: float) -> BlockState:
        """Blocks of the eigenvector of ``T_s`` for ``e^{theta dt}``."""
        scale = math.exp(-self.step.dt * theta)
        blocks = np.empty((self.step.n, DIMENSION, DIMENSION), dtype=np.complex128)
        current = self._head(theta)
        blocks[0] = devectorize(current)
        for l in range(1, self.step.n):
            current = scale * (self._advance @ current)
            blocks[l] = devectorize(current)
        return blocks


@functools.lru_cache(maxsize=64)
def discrete_renewal(
    p: ModelParams, policy: ControlPolicy, dt: float, scheme: StepScheme = StepScheme.SYMMETRIC
) -> DiscreteRenewal:
    return DiscreteRenewal(HybridStepMap(p, policy, dt, 0.0, scheme))


def discrete_scgf(
    p: ModelParams,
    policy: ControlPolicy,
    dt: float,
    s: float,
    scheme: StepScheme = StepScheme.SYMMETRIC,
) -> float:
    """``ln(lambda_max(T_s)) / dt``.

    The eigenvalue comes from the block-0 renewal equation and is accepted
    once its eigenvector satisfies ``T_s v = lambda v`` to ``1e-8`` relative.
    Modes outside the sector emissions feed evolve without emissions and
    never contribute to the counting statistics.

    :raises ConvergenceError: if the eigenpair check fails.
    """
    step = HybridStepMap(p, policy, dt, s, scheme)
    if p.gamma == 0.0:
        # No emissions: T_s is trace preserving for every s.
        return 0.0
    renewal = discrete_renewal(p, policy, dt, step.scheme)
    theta = renewal.invert(s)

    value = math.exp(theta * dt)
    vector = renewal.eigenvector(theta)
    residual = float(np.max(np.abs(step(vector) - value * vector))) / (value * float(np.max(np.abs(vector))))
    if residual > _EIGEN_RTOL:
        raise ConvergenceError("discrete renewal root is not an eigenvalue of the step map", 0, residual)
    log.debug("Hybrid map n=%d s=%r: lambda=%r, eigen residual %.3e", step.n, s, value, residual)
    return theta


def default_steps(policy: ControlPolicy) -> tuple[float, ...]:
    assert policy.delta_t is not None
    return tuple(policy.delta_t / divisor for divisor in DEFAULT_STEP_DIVISORS)


class ConvergenceRow(typing.NamedTuple):
    s: float
    delta_t: float
    theta_discrete: float
    theta_reference: float
    abs_err: float
    rel_err: float


class OrderRow(typing.NamedTuple):
    s: float
    #: Slope of log error against log step over the two finest steps.
    order: float
    #: Richardson extrapolation to ``dt = 0`` from the two finest steps at
    #: the scheme's order.
    extrapolated: float
    extrapolated_rel_err: float


@dataclasses.dataclass(frozen=True)
class ConvergenceStudy:
    rows: tuple[ConvergenceRow, ...]
    orders: tuple[OrderRow, ...]
    #: Per ``s``: errors never grow as ``dt`` shrinks.
    monotone: dict[float, bool]

    @property
    def all_monotone(self) -> bool:
        return all(self.monotone.values())


def _relative(error: float, reference: float) -> float:
    return error / abs(reference) if abs(reference) > _RELATIVE_FLOOR else error


def convergence_study(
    p: ModelParams,
    policy: ControlPolicy,
    s_grid: typing.Sequence[float],
    dt_list: typing.Sequence[float] | None = None,
    threads: int = 1,
    scheme: StepScheme = StepScheme.SYMMETRIC,
) -> ConvergenceStudy:
    """``theta^{dt}(s)`` against ``theta_U(s)`` over every ``(s, dt)`` cell.

    Steps are sorted from coarse to fine. Rows with a vanishing reference
    report the absolute error in place of the relative one.
    """
    steps = sorted(default_steps(policy) if dt_list is None else dt_list, reverse=True)
    if not steps or not len(s_grid):
        raise DomainError("s_grid and dt_list must not be empty")
    scheme = StepScheme(scheme)

    references = ordered_map(lambda s: controlled_scgf(policy, p, float(s)), s_grid, threads)
    cells = list(itertools.product(s_grid, steps))
    values = ordered_map(lambda cell: discrete_scgf(p, policy, cell[1], float(cell[0]), scheme), cells, threads)

    by_s = dict(zip(s_grid, references))
    rows = []
    for (s, dt), theta in zip(cells, values):
        reference = by_s[s]
        error = abs(theta - reference)
        rows.append(ConvergenceRow(float(s), dt, theta, reference, error, _relative(error, reference)))

    monotone: dict[float, bool] = {}
    orders = []
    for s, reference in zip(s_grid, references):
        series = [row for row in rows if row.s == s]
        errors = [row.abs_err for row in series]
        monotone[float(s)] = all(b <= a + 1e-14 for a, b in zip(errors, errors[1:]))
        if len(series) < 2:
            continue
        coarse, fine = series[-2], series[-1]
        if coarse.abs_err <= 0.0 or fine.abs_err <= 0.0:
            continue
        ratio = coarse.delta_t / fine.delta_t
        order = math.log(coarse.abs_err / fine.abs_err) / math.log(ratio)
        extrapolated = fine.theta_discrete + (fine.theta_discrete - coarse.theta_discrete) / (
            ratio ** SCHEME_ORDER[scheme] - 1.0
        )
        orders.append(
            OrderRow(float(s), order, extrapolated, _relative(abs(extrapolated - reference), reference))
        )
    return ConvergenceStudy(tuple(rows), tuple(orders), monotone)
