from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.integrate
import scipy.stats

from jumpcontrol import mcwf, sens, xens
from jumpcontrol.exceptions import DomainError
from jumpcontrol.model import ControlPolicy, control_unitary

from . import DARK, V_SYSTEM, TWO_LEVEL, finite_time_cumulants


def _record(jump_times: tuple[float, ...], t_max: float) -> mcwf.TrajectoryRecord:
    return mcwf.TrajectoryRecord(0, 0, t_max, jump_times, ())


class TestRandomStream:
    def test_reproducible(self) -> None:
        assert mcwf.random_stream(5, 2).random() == mcwf.random_stream(5, 2).random()

    def test_independent_indices(self) -> None:
        assert mcwf.random_stream(5, 2).random() != mcwf.random_stream(5, 3).random()

    @pytest.mark.parametrize("seed, index", [(-1, 0), (0, -1)])
    def test_negative(self, seed: int, index: int) -> None:
        with pytest.raises(DomainError):
            mcwf.random_stream(seed, index)


class TestNoJumpProfile:
    @pytest.mark.parametrize(
        "policy",
        [ControlPolicy.none(), ControlPolicy.rotate_away(1.5), ControlPolicy.reset(1.0), ControlPolicy.pi_half(0.7)],
        ids=str,
    )
    def test_survival_matches_exact(self, policy: ControlPolicy) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM, policy)
        taus = np.array([0.0, 0.25, 0.7, 1.0, 1.5, 2.3456, 4.0, 9.99])
        expected = [mcwf.survival(V_SYSTEM, policy, tau) for tau in taus]
        assert np.allclose(profile.survival(taus), expected, rtol=1e-9, atol=0)

    def test_pulse_instants_are_nodes(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM, ControlPolicy.reset(0.7), micro_step=0.1)
        times = profile.grid(3.0).times
        for k in (1, 2, 3, 4):
            assert np.any(times == k * 0.7)

    def test_rotate_away_pulse(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM, ControlPolicy.rotate_away(3.0))
        profile.grid(10.0)
        (pulse,) = profile.pulses
        assert pulse.time == 3.0
        assert abs(pulse.after[2]) <= 1e-10
        assert np.linalg.norm(pulse.after) == pytest.approx(np.linalg.norm(pulse.before), rel=1e-12)

    def test_reset_pulses(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM, ControlPolicy.reset(3.0))
        profile.grid(10.0)
        # The grid grows in chunks, so it may hold pulses past the horizon.
        expected = [3.0 * m for m in range(1, math.floor(profile.end / 3.0) + 1)]
        assert [pulse.time for pulse in profile.pulses] == expected
        assert expected[:3] == [3.0, 6.0, 9.0]
        for pulse in profile.pulses:
            assert np.allclose(pulse.after[1:], 0.0, atol=1e-10)

    def test_pi_half_pulse(self) -> None:
        policy = ControlPolicy.pi_half(1.5)
        profile = mcwf.NoJumpProfile(V_SYSTEM, policy)
        profile.grid(5.0)
        (pulse,) = profile.pulses
        assert np.allclose(pulse.after, control_unitary(policy, V_SYSTEM) @ pulse.before, atol=1e-15)

    def test_repeat_cap(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM, ControlPolicy.reset(1.0, repeats=2))
        profile.grid(6.0)
        assert len(profile.pulses) == 2

    def test_exhaust(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM, ControlPolicy.reset(1.0))
        end = profile.exhaust()
        assert profile.survival(end) < mcwf.SURVIVAL_FLOOR
        assert profile.end == end

    def test_crossing(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM)
        levels = np.array([0.9, 0.5, 0.2])
        taus = profile.crossing(levels, horizon=50.0)
        assert np.all(np.diff(taus) > 0)
        assert np.allclose(profile.survival(taus), levels, atol=1e-12)

    def test_crossing_beyond_horizon(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM)
        assert profile.crossing(np.array([1e-6]), horizon=5.0)[0] == math.inf

    def test_integral_inverse(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM)
        taus = profile.integral_inverse([0.5, 1.0, 2.0])
        for tau, target in zip(taus, [0.5, 1.0, 2.0]):
            grid = np.linspace(0.0, tau, 2001)
            assert scipy.integrate.trapezoid(profile.survival(grid), grid) == pytest.approx(target, rel=1e-5)

    def test_fresh_profile_at_zero(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM)
        assert profile.survival(0.0) == 1.0
        assert profile.end > 0.0

    def test_fresh_profile_inverse(self) -> None:
        profile = mcwf.NoJumpProfile(V_SYSTEM)
        (tau,) = profile.integral_inverse([0.01])
        # S stays within 1e-5 of one up to tau = 0.01.
        assert tau == pytest.approx(0.01, rel=1e-4)
        assert profile.integral_inverse([0.0])[0] == pytest.approx(0.0, abs=1e-12)

    def test_invalid_micro_step(self) -> None:
        with pytest.raises(DomainError):
            mcwf.NoJumpProfile(V_SYSTEM, micro_step=0.0)


class TestSampler:
    def test_deterministic(self) -> None:
        policy = ControlPolicy.rotate_away(1.5)
        a = mcwf.sample_trajectory(V_SYSTEM, policy, 50.0, seed=7, index=3)
        b = mcwf.sample_trajectory(V_SYSTEM, policy, 50.0, seed=7, index=3)
        c = mcwf.sample_trajectory(V_SYSTEM, policy, 50.0, seed=7, index=4)
        assert a == b
        assert a.jump_times != c.jump_times

    def test_thread_count_does_not_matter(self) -> None:
        sampler = mcwf.TrajectorySampler(V_SYSTEM, ControlPolicy.reset(2.0))
        serial = mcwf.sample_trajectories(sampler, 30.0, 12, seed=1, initial="stationary")
        parallel = mcwf.sample_trajectories(sampler, 30.0, 12, seed=1, initial="stationary", threads=4)
        assert serial == parallel
        assert [record.index for record in serial] == list(range(12))

    def test_record(self) -> None:
        record = mcwf.sample_trajectory(V_SYSTEM, None, 40.0, seed=11)
        assert record.seed == 11
        assert record.initial_age == 0.0
        assert list(record.jump_times) == sorted(record.jump_times)
        assert all(0.0 < t <= 40.0 for t in record.jump_times)
        assert record.control_applications == ()
        assert record.count == len(record.jump_times)
        assert set(record.as_dict()) == {"seed", "index", "t_max", "initial_age", "jump_times", "control_applications"}

    def test_reset_start_emits(self) -> None:
        counts = [mcwf.sample_trajectory(V_SYSTEM, None, 200.0, seed=i).count for i in range(20)]
        assert 0.3 < np.mean(counts) / 200.0 < 0.5

    def test_no_emissions(self) -> None:
        record = mcwf.sample_trajectory(DARK, None, 10.0, seed=1, initial="stationary")
        assert record.count == 0
        sampler = mcwf.TrajectorySampler(DARK)
        assert np.all(np.isinf(sampler.sample_waiting_times(np.random.default_rng(0), 5)))

    @pytest.mark.parametrize("delta_t, repeats", [(1.0, 1), (1.0, None), (0.4, 3)])
    def test_control_times(self, delta_t: float, repeats: int | None) -> None:
        policy = ControlPolicy(ControlPolicy.reset(delta_t).kind, delta_t, repeats)
        record = mcwf.sample_trajectory(V_SYSTEM, policy, 200.0, seed=3)
        boundaries = [0.0, *record.jump_times, record.t_max]
        expected = []
        for start, stop in zip(boundaries[:-1], boundaries[1:]):
            fired = math.floor((stop - start) / delta_t)
            if repeats is not None:
                fired = min(fired, repeats)
            expected.extend(start + delta_t * np.arange(1, fired + 1))
        assert list(record.control_applications) == pytest.approx(expected, abs=1e-9)
        assert len(record.control_applications) > 0

    @pytest.mark.parametrize("initial", ["bogus", ""])
    def test_bad_initial(self, initial: str) -> None:
        with pytest.raises(DomainError):
            mcwf.sample_trajectory(V_SYSTEM, None, 10.0, seed=1, initial=initial)  # type: ignore[arg-type]

    @pytest.mark.parametrize("t_max", [0.0, -1.0, math.inf])
    def test_bad_t_max(self, t_max: float) -> None:
        with pytest.raises(DomainError):
            mcwf.sample_trajectory(V_SYSTEM, None, t_max, seed=1)

    def test_bad_n_traj(self, uncontrolled_sampler: mcwf.TrajectorySampler) -> None:
        with pytest.raises(DomainError):
            mcwf.sample_trajectories(uncontrolled_sampler, 10.0, 0, seed=1)

    def test_stationary_start_has_age(self) -> None:
        sampler = mcwf.TrajectorySampler(V_SYSTEM)
        ages = [sampler.sample(1.0, seed=2, index=i, initial="stationary").initial_age for i in range(200)]
        assert min(ages) >= 0.0
        assert max(ages) > 0.0


class TestWaitingTimes:
    @pytest.mark.parametrize(
        "policy", [ControlPolicy.none(), ControlPolicy.rotate_away(1.5), ControlPolicy.reset(1.0)], ids=str
    )
    def test_distribution(self, rng: np.random.Generator, policy: ControlPolicy) -> None:
        sampler = mcwf.TrajectorySampler(V_SYSTEM, policy)
        waits = sampler.sample_waiting_times(rng, 10_000)
        assert np.all(np.isfinite(waits))
        cdf = np.vectorize(lambda t: 1.0 - mcwf.survival(V_SYSTEM, policy, t))
        assert scipy.stats.kstest(waits, cdf).pvalue > 1e-3

    def test_two_level_gamma(self, rng: np.random.Generator) -> None:
        # Waiting times are Gamma(3, 2) at this drive and decay rate.
        waits = mcwf.TrajectorySampler(TWO_LEVEL).sample_waiting_times(rng, 10_000)
        assert scipy.stats.kstest(waits, scipy.stats.gamma(3, scale=0.5).cdf).pvalue > 1e-3

    def test_mean(self, rng: np.random.Generator) -> None:
        sampler = mcwf.TrajectorySampler(V_SYSTEM, ControlPolicy.reset(3.0))
        waits = sampler.sample_waiting_times(rng, 20_000)
        error = waits.std() / math.sqrt(waits.size)
        assert abs(waits.mean() - sampler.mean_waiting_time) < 4 * error

    def test_horizon(self, rng: np.random.Generator) -> None:
        waits = mcwf.TrajectorySampler(V_SYSTEM).sample_waiting_times(rng, 1000, horizon=0.5)
        assert np.all((waits <= 0.5) | np.isinf(waits))
        assert np.isinf(waits).any()


class TestExactQuantities:
    def test_survival_start(self) -> None:
        assert mcwf.survival(V_SYSTEM, None, 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_survival_decreasing(self) -> None:
        for policy in (None, ControlPolicy.rotate_away(1.5), ControlPolicy.reset(1.0)):
            values = [mcwf.survival(V_SYSTEM, policy, t) for t in np.linspace(0.0, 10.0, 41)]
            assert all(b < a for a, b in zip(values, values[1:]))

    def test_control_continuity(self) -> None:
        policy = ControlPolicy.rotate_away(1.5)
        assert mcwf.survival(V_SYSTEM, policy, 1.5) == pytest.approx(mcwf.survival(V_SYSTEM, None, 1.5), rel=1e-12)
        assert mcwf.survival(V_SYSTEM, policy, 1.0) == pytest.approx(mcwf.survival(V_SYSTEM, None, 1.0), rel=1e-12)

    def test_known_values(self) -> None:
        assert mcwf.survival(V_SYSTEM, None, 1.5) == pytest.approx(0.43, abs=0.01)
        assert mcwf.survival(V_SYSTEM, None, 3.0) == pytest.approx(0.08, abs=0.01)

    def test_occupations(self) -> None:
        assert mcwf.occupations(V_SYSTEM, 0.0) == (1.0, 0.0, 0.0)
        for t in (0.5, 2.0, 8.0):
            assert sum(mcwf.occupations(V_SYSTEM, t)) == pytest.approx(1.0, abs=1e-12)
        assert mcwf.occupations(TWO_LEVEL, 3.0)[2] <= 1e-15


class TestHistogram:
    def test_from_records(self) -> None:
        records = [_record((1.0,), 5.0), _record((2.0,), 5.0), _record((1.0, 2.0, 3.0), 5.0)]
        histogram = mcwf.histogram_from(records, 5.0)
        assert histogram.k.tolist() == [1, 3]
        assert histogram.count.tolist() == [2, 1]
        assert histogram.mean == pytest.approx(5.0 / 3.0)
        assert histogram.variance == pytest.approx(4.0 / 3.0)
        assert histogram.fano_factor == pytest.approx(0.8)
        assert histogram.scaled_log_prob.tolist() == pytest.approx([math.log(2 / 3) / 5, math.log(1 / 3) / 5])
        assert np.array_equal(histogram.rate, -histogram.scaled_log_prob)
        assert [row[:2] for row in histogram.rows()] == [(1, 2), (3, 1)]

    def test_empty(self) -> None:
        histogram = mcwf.histogram_from([_record((), 5.0)], 5.0)
        assert histogram.mean == 0.0
        assert histogram.variance == 0.0
        assert math.isnan(histogram.fano_factor)

    @pytest.mark.slow
    def test_mean_is_activity(self, stationary_records: list[mcwf.TrajectoryRecord]) -> None:
        t = 200.0
        counts = np.array([record.count for record in stationary_records], dtype=float)
        error = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - t * sens.stationary_activity(V_SYSTEM)) < 3 * error

    @pytest.mark.slow
    def test_variance(self, stationary_records: list[mcwf.TrajectoryRecord]) -> None:
        t = 200.0
        histogram = mcwf.histogram_from(stationary_records, t)
        _, exact = finite_time_cumulants(V_SYSTEM, t)
        counts = np.array([record.count for record in stationary_records], dtype=float)
        fourth = np.mean((counts - counts.mean()) ** 4)
        error = math.sqrt((fourth - histogram.variance**2) / counts.size)
        assert abs(histogram.variance - exact) < 3 * error

    @pytest.mark.slow
    def test_rate_function(self) -> None:
        # Binned log-probabilities follow -t phi(k) up to a k-independent offset.
        t, width = 2000.0, 20
        histogram = mcwf.emission_histogram(V_SYSTEM, None, t, 5000, seed=424242, threads=4)
        k0 = sens.activity(V_SYSTEM, 0.0)
        sigma = math.sqrt(sens.susceptibility(V_SYSTEM, 0.0) * t)
        edges = np.arange(round(k0 * t - 2 * sigma), round(k0 * t + 2 * sigma), width)
        centres, empirical = [], []
        for lo in edges:
            inside = (histogram.k >= lo) & (histogram.k < lo + width)
            probability = histogram.count[inside].sum() / histogram.n_traj
            centres.append((lo + (width - 1) / 2) / t)
            empirical.append(-math.log(probability / width) / t)
        phi = sens.rate_function(V_SYSTEM, centres).phi
        difference = np.array(empirical) - phi
        assert np.abs(difference - difference.mean()).max() < 3e-4

    @pytest.mark.slow
    def test_reset_fano_factor(self) -> None:
        policy = ControlPolicy.reset(3.0)
        histogram = mcwf.emission_histogram(V_SYSTEM, policy, 200.0, 4000, seed=99, threads=4)
        exact = xens.controlled_susceptibility(policy, V_SYSTEM, 0.0) / xens.controlled_activity(policy, V_SYSTEM, 0.0)
        assert histogram.fano_factor == pytest.approx(exact, rel=0.1)
        assert histogram.fano_factor < 1.2


class TestBinnedActivity:
    def test_even_bins(self) -> None:
        activity = mcwf.binned_activity(_record((0.1, 0.2, 1.7), 2.0), 0.5)
        assert activity.edges.tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]
        assert activity.rate.tolist() == [4.0, 0.0, 0.0, 2.0]

    def test_short_last_bin(self) -> None:
        activity = mcwf.binned_activity(_record((1.1, 1.2), 1.2), 0.5)
        assert activity.edges.tolist() == pytest.approx([0.0, 0.5, 1.0, 1.2])
        assert activity.rate.tolist() == pytest.approx([0.0, 0.0, 10.0])

    def test_default_width(self) -> None:
        activity = mcwf.binned_activity(_record((), 3.0))
        assert activity.edges.size == 7

    @pytest.mark.parametrize("width", [0.0, -1.0, math.inf])
    def test_bad_width(self, width: float) -> None:
        with pytest.raises(DomainError):
            mcwf.binned_activity(_record((), 3.0), width)
