"""
Quantum-jump (Monte Carlo wave function) sampling of emission records.

Emissions reset the system to ``|0>``, so a trajectory is a sequence of
independent waiting times. Each waiting time is drawn by threshold
crossing: draw ``u`` uniform in ``(0, 1)`` and find the first ``tau`` where the
survival ``S(tau) = |psi(tau)|^2`` of the unnormalised no-jump state falls to
``u``. :class:`NoJumpProfile` tabulates ``psi`` once on the micro-step grid,
control pulses included, and every trajectory of a run inverts the same
profile.
"""

from __future__ import annotations

import functools
import logging
import math
import threading
import typing

import numpy as np
import numpy.typing as npt

from .exceptions import DomainError
from .linops import CMatrix, expm
from .liouville import trace_functional, vectorize
from .model import (
    ControlPolicy,
    ModelParams,
    basis_state,
    control_unitary,
    effective_hamiltonian,
    no_jump_state,
)
from .util.sweep import ordered_map
from .xens import mean_waiting_time, no_jump_map

log = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
InitialState = typing.Literal["reset", "stationary"]

#: Default integration step in units of the inverse bright drive.
DEFAULT_MICRO_STEP = 1e-3
DEFAULT_BIN_WIDTH = 0.5

_CHUNK = 8192
_BISECTIONS = 48
#: Tabulation stops once the survival drops below this; lower thresholds never cross.
SURVIVAL_FLOOR = 1e-18
_MAX_NODES = 20_000_000


def random_stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream for trajectory ``index`` of a run seeded with ``seed``."""
    if seed < 0 or index < 0:
        raise DomainError(f"seed and index must be non-negative, got {seed!r}, {index!r}")
    sequence = np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(sequence))


class PulseRecord(typing.NamedTuple):
    time: float
    before: CMatrix
    after: CMatrix


class _Grid(typing.NamedTuple):
    times: FloatArray
    survival: FloatArray
    slope_left: FloatArray
    slope_right: FloatArray
    cumulative: FloatArray


def _hermite(
    theta: FloatArray, s0: FloatArray, s1: FloatArray, d0: FloatArray, d1: FloatArray, h: FloatArray
) -> FloatArray:
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2 * t3 - 3 * t2 + 1) * s0
        + (t3 - 2 * t2 + theta) * h * d0
        + (-2 * t3 + 3 * t2) * s1
        + (t3 - t2) * h * d1
    )


def _hermite_integral(
    theta: FloatArray, s0: FloatArray, s1: FloatArray, d0: FloatArray, d1: FloatArray, h: FloatArray
) -> FloatArray:
    t2 = theta * theta
    t3 = t2 * theta
    t4 = t3 * theta
    return h * (
        (t4 / 2 - t3 + theta) * s0
        + (t4 / 4 - 2 * t3 / 3 + t2 / 2) * h * d0
        + (t3 - t4 / 2) * s1
        + (t4 / 4 - t3 / 3) * h * d1
    )


class NoJumpProfile:
    """Unnormalised no-jump state after a jump, tabulated on a fixed grid.

    Between pulses the grid spacing is ``delta_t / ceil(delta_t / micro_step)``
    so pulse instants are nodes; after the last pulse (or without control) it
    is ``micro_step``. Each step applies the exact propagator
    ``e^{-i h H_eff}``. Between nodes the survival is the cubic Hermite
    interpolant built from the exact slope ``dS/dtau = -gamma |psi_1|^2``.

    The grid grows on demand and is safe to share between threads.
    """

    def __init__(
        self,
        params: ModelParams,
        policy: ControlPolicy | None = None,
        micro_step: float = DEFAULT_MICRO_STEP,
    ) -> None:
        if not math.isfinite(micro_step) or micro_step <= 0:
            raise DomainError(f"micro_step must be positive and finite, got {micro_step!r}")
        self.params = params
        self.policy = ControlPolicy.none() if policy is None else policy
        self.micro_step = micro_step
        self._h_eff = effective_hamiltonian(params)
        self._unitary = control_unitary(self.policy, params) if self.policy.controlled else None
        self._powers: dict[float, CMatrix] = {}
        self._lock = threading.RLock()

        self._state = basis_state(0)
        self._pulses_done = 0
        self._exhausted = False
        self._pulses: list[PulseRecord] = []
        initial = np.array([0.0])
        self._chunks: list[_Grid] = [_Grid(initial, np.array([1.0]), initial, initial.copy(), initial.copy())]
        self._grid = self._chunks[0]

    @property
    def end(self) -> float:
        return float(self._grid.times[-1])

    @property
    def pulses(self) -> tuple[PulseRecord, ...]:
        """Pre- and post-pulse states at every pulse instant tabulated so far."""
        return tuple(self._pulses)

    def grid(self, horizon: float) -> _Grid:
        """Snapshot of the tabulated profile covering ``[0, horizon]``.

        The profile may end earlier once it is exhausted: the survival fell
        below :data:`SURVIVAL_FLOOR` or the node cap was reached.
        """
        with self._lock:
            if self.end < horizon and not self._exhausted:
                self._extend(max(horizon, 1.5 * self.end))
            return self._grid

    def exhaust(self) -> float:
        """Tabulate until exhausted and return the final time."""
        return float(self.grid(math.inf).times[-1])

    def _step_powers(self, step: float, count: int) -> CMatrix:
        powers = self._powers.get(step)
        if powers is None or powers.shape[0] < count:
            size = max(count, _CHUNK if powers is None else 2 * powers.shape[0])
            propagator = expm(-1j * self._h_eff, step)
            powers = np.empty((size, 3, 3), dtype=np.complex128)
            powers[0] = propagator
            for k in range(1, size):
                powers[k] = propagator @ powers[k - 1]
            self._powers[step] = powers
        return powers[:count]

    def _next_segment(self, start: float) -> tuple[float, int, bool]:
        # (step, steps, ends_in_pulse) for the stretch that starts at ``start``
        policy = self.policy
        more_pulses = policy.controlled and (
            policy.repeats is None or self._pulses_done < policy.repeats
        )
        if not more_pulses:
            return self.micro_step, _CHUNK, False
        assert policy.delta_t is not None
        steps = math.ceil(policy.delta_t / self.micro_step - 1e-9)
        step = policy.delta_t / steps
        pulse_at = (self._pulses_done + 1) * policy.delta_t
        remaining = max(round((pulse_at - start) / step), 1)
        if remaining <= _CHUNK:
            return step, remaining, True
        return step, _CHUNK, False

    def _extend(self, horizon: float) -> None:
        gamma = self.params.gamma
        nodes = self._grid.times.size
        while float(self._chunks[-1].times[-1]) < horizon and not self._exhausted:
            last = self._chunks[-1]
            start = float(last.times[-1])
            step, steps, pulse = self._next_segment(start)
            states = self._step_powers(step, steps) @ self._state
            times = start + step * np.arange(1, steps + 1)
            if pulse:
                assert self.policy.delta_t is not None
                times[-1] = (self._pulses_done + 1) * self.policy.delta_t

            survival = np.sum(np.abs(states) ** 2, axis=1)
            slope_left = -gamma * np.abs(states[:, 1]) ** 2
            slope_right = slope_left.copy()
            self._state = states[-1]
            if pulse:
                assert self._unitary is not None
                after = self._unitary @ states[-1]
                self._pulses.append(PulseRecord(float(times[-1]), states[-1].copy(), after))
                self._pulses_done += 1
                self._state = after
                slope_right[-1] = -gamma * abs(after[1]) ** 2

            s0 = np.concatenate(([last.survival[-1]], survival[:-1]))
            d0 = np.concatenate(([last.slope_right[-1]], slope_right[:-1]))
            h = np.diff(np.concatenate(([start], times)))
            increments = h * (s0 + survival) / 2 + h * h * (d0 - slope_left) / 12
            cumulative = last.cumulative[-1] + np.cumsum(increments)
            self._chunks.append(_Grid(times, survival, slope_left, slope_right, cumulative))

            nodes += steps
            if survival[-1] < SURVIVAL_FLOOR:
                log.debug("No-jump survival reached the floor at tau=%.3f", times[-1])
                self._exhausted = True
            elif nodes >= _MAX_NODES:
                log.warning("No-jump profile stopped at tau=%.3f with survival %.3e", times[-1], survival[-1])
                self._exhausted = True
        self._grid = _Grid(*(np.concatenate(column) for column in zip(*self._chunks)))
        self._chunks = [self._grid]
        log.debug("No-jump profile extended to tau=%.3f (%d nodes)", self.end, self._grid.times.size)

    def survival(self, tau: npt.ArrayLike) -> FloatArray:
        """Interpolated ``S(tau)``; exact at the nodes."""
        points = np.asarray(tau, dtype=np.float64)
        grid = self.grid(max(float(np.max(points, initial=0.0)), self.micro_step))
        k = np.clip(np.searchsorted(grid.times, points, side="right"), 1, grid.times.size - 1)
        h = grid.times[k] - grid.times[k - 1]
        theta = np.clip((points - grid.times[k - 1]) / h, 0.0, 1.0)
        return _hermite(theta, grid.survival[k - 1], grid.survival[k], grid.slope_right[k - 1], grid.slope_left[k], h)

    def crossing(self, levels: npt.ArrayLike, horizon: float) -> FloatArray:
        """First ``tau`` with ``S(tau) = level``, or ``inf`` beyond ``horizon``."""
        targets = np.asarray(levels, dtype=np.float64)
        grid = self.grid(horizon)
        k = np.searchsorted(-grid.survival, -targets, side="left")
        result = np.full(targets.shape, math.inf)
        inside = (k > 0) & (k < grid.times.size)
        k = k[inside]
        lo = np.zeros(k.shape)
        hi = np.ones(k.shape)
        s0, s1 = grid.survival[k - 1], grid.survival[k]
        d0, d1 = grid.slope_right[k - 1], grid.slope_left[k]
        h = grid.times[k] - grid.times[k - 1]
        y = targets[inside]
        for _ in range(_BISECTIONS):
            mid = (lo + hi) / 2
            above = _hermite(mid, s0, s1, d0, d1, h) > y
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        tau = grid.times[k - 1] + h * (lo + hi) / 2
        result[inside] = np.where(tau <= horizon, tau, math.inf)
        return result

    def integral_inverse(self, targets: npt.ArrayLike) -> FloatArray:
        """``tau`` with ``int_0^tau S = target``; clamped to the tabulated end."""
        values = np.asarray(targets, dtype=np.float64)
        with self._lock:
            self.grid(self.micro_step)
            while self._grid.cumulative[-1] < np.max(values, initial=0.0) and not self._exhausted:
                self._extend(max(2 * self.end, self.micro_step * _CHUNK))
            grid = self._grid
        k = np.clip(np.searchsorted(grid.cumulative, values, side="left"), 1, grid.times.size - 1)
        lo = np.zeros(k.shape)
        hi = np.ones(k.shape)
        s0, s1 = grid.survival[k - 1], grid.survival[k]
        d0, d1 = grid.slope_right[k - 1], grid.slope_left[k]
        h = grid.times[k] - grid.times[k - 1]
        remainder = values - grid.cumulative[k - 1]
        for _ in range(_BISECTIONS):
            mid = (lo + hi) / 2
            below = _hermite_integral(mid, s0, s1, d0, d1, h) < remainder
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return typing.cast(FloatArray, grid.times[k - 1] + h * (lo + hi) / 2)


class TrajectoryRecord(typing.NamedTuple):
    """Emission record of one trajectory on ``(0, t_max]``.

    ``initial_age`` is the time since the last emission at ``t = 0``; control
    times count multiples of ``delta_t`` from the preceding emission, the start
    counting as an emission at ``-initial_age``.
    """

    seed: int
    index: int
    t_max: float
    jump_times: tuple[float, ...]
    control_applications: tuple[float, ...]
    initial_age: float = 0.0

    @property
    def count(self) -> int:
        return len(self.jump_times)

    def as_dict(self) -> dict[str, typing.Any]:
        return {
            "seed": self.seed,
            "index": self.index,
            "t_max": self.t_max,
            "initial_age": self.initial_age,
            "jump_times": list(self.jump_times),
            "control_applications": list(self.control_applications),
        }


class TrajectorySampler:
    """Draws independent emission records for one model and policy."""

    def __init__(
        self,
        params: ModelParams,
        policy: ControlPolicy | None = None,
        micro_step: float = DEFAULT_MICRO_STEP,
    ) -> None:
        self.params = params
        self.policy = ControlPolicy.none() if policy is None else policy
        self.profile = NoJumpProfile(params, self.policy, micro_step)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(params={self.params!r}, policy={self.policy!r})"

    @functools.cached_property
    def mean_waiting_time(self) -> float:
        return mean_waiting_time(self.policy, self.params)

    def sample_waiting_times(self, rng: np.random.Generator, count: int, horizon: float = math.inf) -> FloatArray:
        """``count`` independent waiting times measured from an emission.

        Times beyond ``horizon`` come back as ``inf``. An infinite horizon
        tabulates the profile until the survival underflows.
        """
        levels = rng.random(count)
        if self.params.gamma == 0.0:
            return np.full(count, math.inf)
        if math.isinf(horizon):
            horizon = self.profile.exhaust()
        return self.profile.crossing(levels, horizon)

    def _initial_age(self, rng: np.random.Generator, initial: InitialState) -> float:
        if initial not in ("reset", "stationary"):
            raise DomainError(f"initial must be 'reset' or 'stationary', got {initial!r}")
        if initial == "reset" or self.params.gamma == 0.0:
            return 0.0
        return float(self.profile.integral_inverse(rng.random() * self.mean_waiting_time))

    def _pulses_between(self, jump: float, start: float, stop: float) -> FloatArray:
        # Pulse instants in (start, stop] for an emission at ``jump``.
        policy = self.policy
        if not policy.controlled:
            return np.empty(0)
        assert policy.delta_t is not None
        first = math.floor((start - jump) / policy.delta_t) + 1
        last = math.floor((stop - jump) / policy.delta_t)
        if policy.repeats is not None:
            last = min(last, policy.repeats)
        if last < first:
            return np.empty(0)
        return jump + policy.delta_t * np.arange(first, last + 1)

    def sample(
        self, t_max: float, seed: int, index: int = 0, initial: InitialState = "reset"
    ) -> TrajectoryRecord:
        if not math.isfinite(t_max) or t_max <= 0:
            raise DomainError(f"t_max must be positive and finite, got {t_max!r}")
        rng = random_stream(seed, index)
        age = self._initial_age(rng, initial)

        jumps: list[FloatArray] = []
        controls: list[FloatArray] = []

        # First interval: conditioned on no emission during the age.
        level = rng.random() * float(self.profile.survival(age))
        first = float(self.profile.crossing(np.array([level]), age + t_max)[0]) - age
        previous = -age
        if math.isinf(first):
            controls.append(self._pulses_between(previous, 0.0, t_max))
            return self._record(seed, index, t_max, jumps, controls, age)
        controls.append(self._pulses_between(previous, 0.0, first))
        jumps.append(np.array([first]))
        now = first

        while True:
            remaining = t_max - now
            batch = int(1.25 * remaining / self.mean_waiting_time) + 8 if self.params.gamma > 0 else 1
            waits = self.sample_waiting_times(rng, batch, remaining)
            times = now + np.cumsum(waits)
            times = times[times <= t_max]
            starts = np.concatenate(([now], times))
            for begin, end in zip(starts[:-1], starts[1:]):
                controls.append(self._pulses_between(begin, begin, end))
            jumps.append(times)
            if times.size < batch:
                controls.append(self._pulses_between(starts[-1], starts[-1], t_max))
                break
            now = float(times[-1])
        return self._record(seed, index, t_max, jumps, controls, age)

    def _record(
        self,
        seed: int,
        index: int,
        t_max: float,
        jumps: list[FloatArray],
        controls: list[FloatArray],
        age: float,
    ) -> TrajectoryRecord:
        jump_times = np.concatenate(jumps) if jumps else np.empty(0)
        control_times = np.concatenate(controls) if controls else np.empty(0)
        return TrajectoryRecord(
            seed,
            index,
            float(t_max),
            tuple(float(t) for t in jump_times),
            tuple(float(t) for t in control_times),
            age,
        )


def sample_trajectory(
    p: ModelParams,
    policy: ControlPolicy | None,
    t_max: float,
    seed: int,
    *,
    index: int = 0,
    micro_step: float = DEFAULT_MICRO_STEP,
    initial: InitialState = "reset",
) -> TrajectoryRecord:
    return TrajectorySampler(p, policy, micro_step).sample(t_max, seed, index, initial)


def sample_trajectories(
    sampler: TrajectorySampler,
    t_max: float,
    n_traj: int,
    seed: int,
    initial: InitialState = "reset",
    threads: int = 1,
) -> list[TrajectoryRecord]:
    """Trajectories ``0..n_traj-1`` of a run; independent of ``threads``."""
    if n_traj < 1:
        raise DomainError(f"n_traj must be at least 1, got {n_traj!r}")
    return ordered_map(lambda i: sampler.sample(t_max, seed, i, initial), range(n_traj), threads)


def survival(p: ModelParams, policy: ControlPolicy | None, t: float) -> float:
    """Exact ``S(t)`` (or ``S^U(t)``): probability of no emission during ``[0, t]``."""
    policy = ControlPolicy.none() if policy is None else policy
    rho = no_jump_map(policy, p, t) @ vectorize(np.diag([1.0, 0.0, 0.0]))
    return float(np.vdot(trace_functional(), rho).real)


def occupations(p: ModelParams, t: float) -> tuple[float, float, float]:
    return no_jump_state(p, t).state.populations


class EmissionHistogram(typing.NamedTuple):
    """Distribution of the number of emissions ``K`` at time ``t``."""

    t: float
    n_traj: int
    k: npt.NDArray[np.int64]
    count: npt.NDArray[np.int64]

    @property
    def probability(self) -> FloatArray:
        return typing.cast(FloatArray, self.count / self.n_traj)

    @property
    def scaled_log_prob(self) -> FloatArray:
        """``log P_t(K) / t``."""
        return typing.cast(FloatArray, np.log(self.probability) / self.t)

    @property
    def rate(self) -> FloatArray:
        return -self.scaled_log_prob

    @property
    def mean(self) -> float:
        return float(np.dot(self.k, self.probability))

    @property
    def variance(self) -> float:
        centred = (self.k - self.mean) ** 2
        ddof = 1 if self.n_traj > 1 else 0
        return float(np.dot(centred, self.count) / (self.n_traj - ddof))

    @property
    def fano_factor(self) -> float:
        return self.variance / self.mean if self.mean > 0 else math.nan

    def rows(self) -> typing.Iterator[tuple[int, int, float, float]]:
        for k, count, slp, rate in zip(self.k, self.count, self.scaled_log_prob, self.rate):
            yield int(k), int(count), float(slp), float(rate)


def histogram_from(records: typing.Sequence[TrajectoryRecord], t: float) -> EmissionHistogram:
    counts = np.array([record.count for record in records], dtype=np.int64)
    values, frequency = np.unique(counts, return_counts=True)
    return EmissionHistogram(float(t), len(records), values.astype(np.int64), frequency.astype(np.int64))


def emission_histogram(
    p: ModelParams,
    policy: ControlPolicy | None,
    t: float,
    n_traj: int,
    seed: int,
    *,
    micro_step: float = DEFAULT_MICRO_STEP,
    initial: InitialState = "stationary",
    threads: int = 1,
) -> EmissionHistogram:
    """Histogram of emission counts over ``n_traj`` independent trajectories.

    Trajectories start in the stationary state by default, so the counting
    process is stationary and ``mean / t`` is the stationary activity.
    """
    sampler = TrajectorySampler(p, policy, micro_step)
    records = sample_trajectories(sampler, t, n_traj, seed, initial, threads)
    return histogram_from(records, t)


class BinnedActivity(typing.NamedTuple):
    edges: FloatArray
    rate: FloatArray


def binned_activity(record: TrajectoryRecord, bin_width: float = DEFAULT_BIN_WIDTH) -> BinnedActivity:
    """Emissions per unit time in consecutive bins of ``(0, t_max]``."""
    if not math.isfinite(bin_width) or bin_width <= 0:
        raise DomainError(f"bin_width must be positive and finite, got {bin_width!r}")
    bins = math.ceil(record.t_max / bin_width - 1e-12)
    edges = np.minimum(bin_width * np.arange(bins + 1), record.t_max)
    counts, _ = np.histogram(np.asarray(record.jump_times), bins=edges)
    return BinnedActivity(edges, counts / np.diff(edges))
