"""
The driven three-level V-system, its conditional no-jump evolution and the
catch-and-reverse control unitaries.

Levels are ordered ``|0>, |1>, |2>``: ``|0> <-> |1>`` is the bright, strongly
damped transition and ``|0> <-> |2>`` the weak drive into the dark level.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import typing
import warnings

import numpy as np

from .exceptions import DegeneracyWarning, DomainError
from .linops import CMatrix, expm

log = logging.getLogger(__name__)

DIMENSION = 3

#: Largest finite number of repeated pulses accepted by :class:`ControlPolicy`.
MAX_REPEATS = 10_000

_DEGENERATE_NORM = 1e-12


def basis_state(level: int) -> CMatrix:
    state = np.zeros(DIMENSION, dtype=np.complex128)
    state[level] = 1.0
    return state


@dataclasses.dataclass(frozen=True)
class ModelParams:
    """Physical constants of the V-system.

    :param omega01: Drive amplitude on the bright ``0 <-> 1`` transition.
    :param omega02: Drive amplitude on the weak ``0 <-> 2`` transition.
    :param gamma: Decay rate of level ``|1>``, the only detected channel.
    """

    omega01: float = 1.0
    omega02: float = 0.1
    gamma: float = 4.0

    def __post_init__(self) -> None:
        for name in ("omega01", "omega02", "gamma"):
            self._validate_finite(getattr(self, name), name)
        if self.gamma < 0:
            raise DomainError(f"gamma must be non-negative, got {self.gamma!r}")

    @classmethod
    def _validate_finite(cls, value: float, name: str) -> None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DomainError(f"{name} must be a real number, got {value!r}")
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value!r}")


class ControlKind(str, enum.Enum):
    """Which unitary a policy applies once the no-jump interval reaches ``delta_t``."""

    NONE = "none"
    ROTATE_AWAY = "rotate-away"
    PI_HALF = "pi-half"
    RESET = "reset"
    IDENTITY = "identity"


class StepScheme(str, enum.Enum):
    """How a discrete time step of length ``dt`` orders drive, decay and emission."""

    #: Half a step of drive on either side of the decay; emissions and
    #: pulses happen mid-step.
    SYMMETRIC = "symmetric"
    #: ``K0 = e^{-i dt H} sqrt(1 - dt J^dag J)`` and ``K1 = e^{-i dt H} sqrt(dt) J``.
    FORWARD = "forward"


@dataclasses.dataclass(frozen=True)
class ControlPolicy:
    """Feedback scheme applied between emissions.

    The unitary of ``kind`` fires each time the time since the last emission
    reaches a multiple of ``delta_t``, at most ``repeats`` times; ``repeats=None``
    means without limit. Use the factories rather than the constructor:

    .. code-block:: python

        ControlPolicy.rotate_away(3.0)            # one pulse, U_dt
        ControlPolicy.pi_half(1.5)                # one pulse, U_2
        ControlPolicy.reset(3.0)                  # a pulse every 3.0, U'_dt
        ControlPolicy.reset(3.0, repeats=5)       # at most five pulses
    """

    kind: ControlKind = ControlKind.NONE
    delta_t: typing.Optional[float] = None
    repeats: typing.Optional[int] = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ControlKind(self.kind))
        if self.kind is ControlKind.NONE:
            object.__setattr__(self, "delta_t", None)
            object.__setattr__(self, "repeats", 0)
            return
        object.__setattr__(self, "delta_t", self._validate_delta_t(self.delta_t))
        object.__setattr__(self, "repeats", self._validate_repeats(self.repeats))

    @classmethod
    def _validate_delta_t(cls, value: float | None) -> float:
        if value is None:
            raise DomainError("delta_t is required for a controlled policy")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DomainError(f"delta_t must be a number, got {value!r}")
        if not math.isfinite(value) or value <= 0:
            raise DomainError(f"delta_t must be positive and finite, got {value!r}")
        return float(value)

    @classmethod
    def _validate_repeats(cls, value: int | None) -> int | None:
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise DomainError(f"repeats must be an integer or None, got {value!r}")
        if not 1 <= value <= MAX_REPEATS:
            raise DomainError(f"repeats must lie in [1, {MAX_REPEATS}], got {value!r}")
        return value

    @classmethod
    def none(cls) -> ControlPolicy:
        return cls(ControlKind.NONE)

    @classmethod
    def rotate_away(cls, delta_t: float) -> ControlPolicy:
        return cls(ControlKind.ROTATE_AWAY, delta_t, 1)

    @classmethod
    def pi_half(cls, delta_t: float) -> ControlPolicy:
        return cls(ControlKind.PI_HALF, delta_t, 1)

    @classmethod
    def reset(cls, delta_t: float, repeats: int | None = None) -> ControlPolicy:
        return cls(ControlKind.RESET, delta_t, repeats)

    @classmethod
    def identity(cls, delta_t: float, repeats: int | None = 1) -> ControlPolicy:
        return cls(ControlKind.IDENTITY, delta_t, repeats)

    @property
    def controlled(self) -> bool:
        return self.kind is not ControlKind.NONE

    @property
    def unbounded(self) -> bool:
        return self.controlled and self.repeats is None

    def with_delta_t(self, delta_t: float) -> ControlPolicy:
        return dataclasses.replace(self, delta_t=delta_t)

    def pulses_before(self, tau: float) -> int:
        """Number of pulses fired once the no-jump interval has lasted ``tau``."""
        if not self.controlled:
            return 0
        assert self.delta_t is not None
        fired = math.floor(tau / self.delta_t)
        return fired if self.repeats is None else min(fired, self.repeats)


@dataclasses.dataclass(frozen=True, eq=False)
class PureState:
    """Amplitudes on ``|0>, |1>, |2>`` with their norm kept alongside."""

    amplitudes: CMatrix
    norm: float = 1.0

    def normalized(self) -> PureState:
        length = float(np.linalg.norm(self.amplitudes))
        return PureState(self.amplitudes / length, 1.0)

    @property
    def populations(self) -> typing.Tuple[float, float, float]:
        p = np.abs(self.amplitudes) ** 2
        return float(p[0]), float(p[1]), float(p[2])


class NoJumpState(typing.NamedTuple):
    state: PureState
    survival: float


def build_hamiltonian(p: ModelParams) -> CMatrix:
    h = np.zeros((DIMENSION, DIMENSION), dtype=np.complex128)
    h[0, 1] = h[1, 0] = p.omega01
    h[0, 2] = h[2, 0] = p.omega02
    return h


def build_jump(p: ModelParams) -> CMatrix:
    """``J = sqrt(gamma) |0><1|``."""
    if p.gamma < 0:
        raise DomainError(f"gamma must be non-negative, got {p.gamma!r}")
    j = np.zeros((DIMENSION, DIMENSION), dtype=np.complex128)
    j[0, 1] = math.sqrt(p.gamma)
    return j


def effective_hamiltonian(p: ModelParams) -> CMatrix:
    """``H_eff = H - (i/2) J^dagger J``, the generator of no-jump evolution."""
    j = build_jump(p)
    return build_hamiltonian(p) - 0.5j * (j.conj().T @ j)


def no_jump_state(p: ModelParams, t: float) -> NoJumpState:
    """Conditional state after ``t`` without emissions, starting from ``|0>``."""
    if not math.isfinite(t) or t < 0:
        raise DomainError(f"t must be finite and non-negative, got {t!r}")
    amplitudes = expm(-1j * effective_hamiltonian(p), t) @ basis_state(0)
    survival = float(np.vdot(amplitudes, amplitudes).real)
    if survival <= 0.0:
        raise DomainError(f"no-jump amplitude underflows at t={t!r}")
    return NoJumpState(PureState(amplitudes, math.sqrt(survival)).normalized(), survival)


def _completed_basis(vector: CMatrix) -> CMatrix:
    # Unitary whose first column is ``vector``; the rest is Gram-Schmidt over
    # |0>, |1>, |2> in that order. Accepting only residuals of norm >= 0.5
    # keeps the completion well conditioned and always succeeds in 3D.
    columns = [vector]
    for level in range(DIMENSION):
        w = basis_state(level)
        for _ in range(2):
            for q in columns:
                w = w - np.vdot(q, w) * q
        length = float(np.linalg.norm(w))
        if length >= 0.5:
            columns.append(w / length)
        if len(columns) == DIMENSION:
            break
    return np.column_stack(columns)


def unitary_mapping(source: CMatrix, target: CMatrix) -> CMatrix:
    """A unitary sending the unit vector ``source`` exactly onto ``target``."""
    source = source / np.linalg.norm(source)
    target = target / np.linalg.norm(target)
    return _completed_basis(target) @ _completed_basis(source).conj().T


def control_unitary(policy: ControlPolicy, p: ModelParams) -> CMatrix:
    """The 3x3 unitary fired by ``policy``.

    Returns the identity, with a :class:`DegeneracyWarning`, when the
    no-jump state at ``delta_t`` has nothing outside ``|0>`` to act on.
    """
    if policy.kind is ControlKind.NONE:
        raise DomainError("an uncontrolled policy has no control unitary")
    if policy.kind is ControlKind.IDENTITY:
        return np.eye(DIMENSION, dtype=np.complex128)
    if policy.kind is ControlKind.PI_HALF:
        swap = np.zeros((DIMENSION, DIMENSION), dtype=np.complex128)
        swap[0, 2] = swap[2, 0] = 1.0
        return expm(0.5j * math.pi * swap)

    assert policy.delta_t is not None
    psi = no_jump_state(p, policy.delta_t).state.amplitudes
    a, b, c = psi
    rest = math.sqrt(abs(b) ** 2 + abs(c) ** 2)
    if rest <= _DEGENERATE_NORM:
        warnings.warn(
            f"no-jump state at delta_t={policy.delta_t!r} is |0>; "
            f"{policy.kind.value} control reduces to the identity",
            DegeneracyWarning,
            stacklevel=2,
        )
        return np.eye(DIMENSION, dtype=np.complex128)

    if policy.kind is ControlKind.ROTATE_AWAY:
        target = a * basis_state(0) + rest * basis_state(1)
    else:
        target = basis_state(0)
    unitary = unitary_mapping(psi, target)
    log.debug("Built %s unitary for delta_t=%r", policy.kind.value, policy.delta_t)
    return unitary
