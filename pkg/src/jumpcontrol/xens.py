"""
x-ensemble machinery for controlled dynamics.

Control makes the emission process non-Markovian but keeps it a renewal
process: every emission resets the system to ``|0><0|``. The SCGF is then
obtained by inverting ``g(x)``, the log of the dominant eigenvalue of the
per-emission tilted map ``F_x = J Qhat_x``, where ``Qhat_x`` is the Laplace
transform of the controlled no-jump evolution.
"""

from __future__ import annotations

import functools
import logging
import math
import typing
import warnings

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .exceptions import (
    AccuracyError,
    ClosedFormMismatchWarning,
    DegeneracyWarning,
    DivergenceError,
    DomainError,
    NumericalError,
    RangeError,
    SpectralError,
)
from .linops import CMatrix, dominant_eig, expm, krylov_basis, solve, spectral_radius
from .liouville import (
    SuperOp,
    identity_superop,
    jump_superop,
    no_jump_generator,
    trace_functional,
    unitary_superop,
    vectorize,
)
from .model import ControlPolicy, ModelParams, basis_state, control_unitary, effective_hamiltonian
from .sens import DERIVATIVE_STEP, LDCurve, curve_from, default_s_grid, real_part, stencil

if typing.TYPE_CHECKING:
    import numpy.typing as npt

log = logging.getLogger(__name__)

#: Series are treated as divergent once their spectral radius reaches 1 - this.
DIVERGENCE_MARGIN = 1e-9

_MAX_BRACKET_STEPS = 60
_MISMATCH_RTOL = 1e-9


def _reset_vector() -> CMatrix:
    return vectorize(np.diag([1.0, 0.0, 0.0]))


class XTiltedMap(typing.NamedTuple):
    x: float
    policy: ControlPolicy
    params: ModelParams
    matrix: SuperOp


class ControlledNoJumpMap:
    """Evolution between emissions under a control policy.

    Calling the map with an elapsed time ``tau`` returns the superoperator
    ``e^{(tau - m dt) R} (U e^{dt R})^m`` with ``m`` the number of pulses fired
    by then. The Laplace-space methods evaluate its transform in closed form.

    Instances cache every ``x``-independent matrix; obtain them through
    :func:`controlled_map` to share that work.
    """

    def __init__(self, policy: ControlPolicy, params: ModelParams) -> None:
        self.policy = policy
        self.params = params
        self.generator = no_jump_generator(params)
        self.jump = jump_superop(params)
        self._identity = identity_superop()

        if policy.controlled:
            assert policy.delta_t is not None
            self.delta_t: float = policy.delta_t
            self.pulse = unitary_superop(control_unitary(policy, params))
            self.interval = expm(self.generator, self.delta_t)
            self.cycle = self.pulse @ self.interval

    def __repr__(self) -> str:
        return f"{type(self).__name__}(policy={self.policy!r}, params={self.params!r})"

    def __call__(self, tau: float) -> SuperOp:
        if not math.isfinite(tau) or tau < 0:
            raise DomainError(f"tau must be finite and non-negative, got {tau!r}")
        pulses = self.policy.pulses_before(tau)
        if pulses == 0:
            return expm(self.generator, tau)
        remainder = tau - pulses * self.delta_t
        return expm(self.generator, remainder) @ np.linalg.matrix_power(self.cycle, pulses)

    @functools.cached_property
    def abscissa(self) -> float:
        """Left edge of the ``x`` domain of the Laplace transform.

        For finite policies the long-time decay is that of ``R``. Under
        unbounded repetition it is set by ``U e^{dt R}`` on the sector reachable
        from ``|0><0|``; modes outside that sector never influence emissions.
        """
        if not self.policy.unbounded:
            return float(np.max(scipy.linalg.eigvals(self.generator).real))
        basis, restricted = self._sector
        radius = spectral_radius(restricted)
        if radius <= 0.0:
            return -math.inf
        return math.log(radius) / self.delta_t

    @functools.cached_property
    def _sector(self) -> tuple[CMatrix, CMatrix]:
        basis = krylov_basis(self.cycle, _reset_vector())
        log.debug("Reachable sector of %r has dimension %d", self.policy, basis.shape[1])
        return basis, basis.conj().T @ self.cycle @ basis

    def _check_finite_domain(self, x: float) -> None:
        if x <= self.abscissa:
            raise DivergenceError(x, math.exp(self.abscissa - x))

    def _finite_bracket(self, x: float, repeats: int) -> SuperOp:
        # I - sum_{m=1}^M e^{-m dt x} (I - U) E (U E)^{m-1}
        decay = math.exp(-self.delta_t * x)
        core = (self._identity - self.pulse) @ self.interval
        step = decay * self.cycle
        total = np.zeros_like(core)
        power = decay * self._identity
        for _ in range(repeats):
            total += core @ power
            power = step @ power
        if not np.all(np.isfinite(total)):
            raise DivergenceError(x, spectral_radius(step))
        return self._identity - total

    def _unbounded_bracket(self, x: float) -> SuperOp:
        decay = math.exp(-self.delta_t * x)
        step = decay * self.cycle
        radius = spectral_radius(step)
        if radius >= 1.0 - DIVERGENCE_MARGIN:
            raise DivergenceError(x, radius)
        geometric = solve(self._identity - step, self._identity)

        resummed = self._identity - decay * (self._identity - self.pulse) @ self.interval @ geometric
        displayed = (self._identity - decay * self.interval) @ geometric
        mismatch = float(np.max(np.abs(resummed - displayed)))
        if mismatch > _MISMATCH_RTOL * max(1.0, float(np.max(np.abs(displayed)))):
            warnings.warn(
                f"resummed and closed infinite-repeat forms differ by {mismatch:.3e} at x={x!r}",
                ClosedFormMismatchWarning,
                stacklevel=3,
            )
        return resummed

    def laplace(self, x: float) -> SuperOp:
        """``Qhat_x``, the Laplace transform of the map, as a full 9x9 matrix."""
        if not math.isfinite(x):
            raise DomainError(f"x must be finite, got {x!r}")
        shifted = x * self._identity - self.generator
        if not self.policy.controlled:
            self._check_finite_domain(x)
            return solve(shifted, self._identity)
        if self.policy.repeats is None:
            return solve(shifted, self._unbounded_bracket(x))
        self._check_finite_domain(x)
        return solve(shifted, self._finite_bracket(x, self.policy.repeats))

    def segment_integral(self, x: float) -> SuperOp:
        """``int_0^dt e^{u (R - x)} du`` from an augmented exponential.

        This equals ``(x - R)^{-1} (I - e^{dt (R - x)})`` but stays finite where
        ``x - R`` is singular.
        """
        size = self.generator.shape[0]
        augmented = np.zeros((2 * size, 2 * size), dtype=np.complex128)
        augmented[:size, :size] = self.delta_t * (self.generator - x * self._identity)
        augmented[:size, size:] = self.delta_t * self._identity
        return expm(augmented)[:size, size:]

    def reset_response(self, x: float) -> CMatrix:
        """``Qhat_x`` applied to the post-emission state ``|0><0|``."""
        if not (self.policy.controlled and self.policy.repeats is None):
            return self.laplace(x) @ _reset_vector()

        basis, restricted = self._sector
        decay = math.exp(-self.delta_t * x)
        radius = decay * spectral_radius(restricted)
        if radius >= 1.0 - DIVERGENCE_MARGIN:
            raise DivergenceError(x, radius)
        size = restricted.shape[0]
        coefficients = solve(
            np.eye(size, dtype=np.complex128) - decay * restricted,
            basis.conj().T @ _reset_vector(),
        )
        return self.segment_integral(x) @ (basis @ coefficients)

    def renewal_weight(self, x: float) -> float:
        """``Tr[J Qhat_x |0><0|]``, the Laplace transform of the waiting-time density."""
        weight = np.vdot(trace_functional(), self.jump @ self.reset_response(x))
        return real_part(complex(weight), f"renewal weight at x={x!r}")

    def tilted(self, x: float) -> XTiltedMap:
        return XTiltedMap(x, self.policy, self.params, self.jump @ self.laplace(x))

    def g(self, x: float) -> float:
        """Log of the dominant eigenvalue of ``F_x``.

        ``F_x`` has rank one (every emission lands in ``|0><0|``), so under
        unbounded repetition the eigenvalue is read off the reachable sector.
        """
        if self.policy.controlled and self.policy.repeats is None:
            value = self.renewal_weight(x)
        else:
            pair = dominant_eig(self.tilted(x).matrix, "largest-modulus")
            value = real_part(pair.value, f"F_x eigenvalue at x={x!r}")
        if not value > 0.0:
            raise SpectralError(f"dominant eigenvalue of F_x is not positive at x={x!r}")
        return math.log(value)

    def invert(self, s: float) -> float:
        """``theta_U(s)``: the ``x`` with ``g(x) = s``."""
        if not math.isfinite(s):
            raise DomainError(f"s must be finite, got {s!r}")
        x = solve_decreasing(lambda x: self.g(x) - s, self.abscissa, s)
        log.debug("Inverted g at s=%r: x=%r", s, x)
        return x

    def mean_waiting_time(self) -> float:
        """``int_0^inf S^U(tau) dtau``: the mean time between emissions."""
        value = np.vdot(trace_functional(), self.reset_response(0.0))
        return real_part(complex(value), "mean waiting time")


def solve_decreasing(
    func: typing.Callable[[float], float], lower: float, target: float
) -> float:
    """Root of a strictly decreasing ``func`` on ``(lower, inf)``.

    Starts at ``x = 0`` (or just right of ``lower``), expands the bracket
    geometrically and then runs Brent's bracketed bisection to ``xtol=1e-15``.

    :raises RangeError: if no sign change is found; ``target`` and the
        function values reached are reported as the attainable interval.
    """
    start = 0.0 if lower < 0.0 else lower + 1.0
    value = func(start)
    if value == 0.0:
        return start

    if value > 0.0:
        lo, f_lo, step = start, value, max(1.0, abs(start))
        for _ in range(_MAX_BRACKET_STEPS):
            hi = lo + step
            f_hi = func(hi)
            if f_hi <= 0.0:
                break
            lo, f_lo, step = hi, f_hi, 2 * step
        else:
            raise RangeError(target, target + f_hi, target + value)
    else:
        hi, f_hi = start, value
        gap = start - lower
        lo, f_lo = hi, f_hi
        for k in range(1, _MAX_BRACKET_STEPS + 1):
            candidate = lower + gap * 2.0**-k
            try:
                f_candidate = func(candidate)
            except NumericalError as e:
                log.debug("Bracket search stopped at x=%r: %s", candidate, e)
                raise RangeError(target, target + value, target + f_lo) from e
            if f_candidate > 0.0:
                lo, f_lo = candidate, f_candidate
                break
            hi, f_hi = candidate, f_candidate
            lo, f_lo = candidate, f_candidate
        else:
            raise RangeError(target, target + value, target + f_lo)
        if f_lo <= 0.0:
            raise RangeError(target, target + value, target + f_lo)

    if f_hi == 0.0:
        return hi
    root = scipy.optimize.brentq(func, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return float(root)


@functools.lru_cache(maxsize=128)
def controlled_map(policy: ControlPolicy, params: ModelParams) -> ControlledNoJumpMap:
    return ControlledNoJumpMap(policy, params)


def no_jump_map(policy: ControlPolicy, p: ModelParams, tau: float) -> SuperOp:
    return controlled_map(policy, p)(tau)


def laplace_no_jump(policy: ControlPolicy, p: ModelParams, x: float) -> SuperOp:
    return controlled_map(policy, p).laplace(x)


def x_tilted_map(policy: ControlPolicy, p: ModelParams, x: float) -> XTiltedMap:
    return controlled_map(policy, p).tilted(x)


def g_of_x(policy: ControlPolicy, p: ModelParams, x: float) -> float:
    return controlled_map(policy, p).g(x)


def convergence_abscissa(policy: ControlPolicy, p: ModelParams) -> float:
    return controlled_map(policy, p).abscissa


def controlled_scgf(policy: ControlPolicy, p: ModelParams, s: float) -> float:
    return controlled_map(policy, p).invert(s)


def controlled_activity(
    policy: ControlPolicy, p: ModelParams, s: float, h: float = DERIVATIVE_STEP
) -> float:
    return stencil(functools.partial(controlled_scgf, policy, p), s, h).k


def controlled_susceptibility(
    policy: ControlPolicy, p: ModelParams, s: float, h: float = DERIVATIVE_STEP
) -> float:
    return stencil(functools.partial(controlled_scgf, policy, p), s, h).chi


def controlled_curve(
    policy: ControlPolicy,
    p: ModelParams,
    grid: npt.ArrayLike | None = None,
    threads: int = 1,
) -> LDCurve:
    return curve_from(
        functools.partial(controlled_scgf, policy, p),
        default_s_grid() if grid is None else grid,
        threads=threads,
    )


def mean_waiting_time(policy: ControlPolicy, p: ModelParams) -> float:
    return controlled_map(policy, p).mean_waiting_time()


# Scalar renewal oracle. It only uses the 3x3 effective Hamiltonian, never
# the superoperators above.


def waiting_time_density(p: ModelParams, t: float) -> float:
    """``w(t) = gamma |<1| e^{-i t H_eff} |0>|^2``."""
    amplitude = expm(-1j * effective_hamiltonian(p), t) @ basis_state(0)
    return p.gamma * float(abs(amplitude[1]) ** 2)


def _quadrature_horizon(p: ModelParams) -> float:
    return min(max(25.0 / p.gamma, 1.0), 200.0)


def laplace_waiting_time(p: ModelParams, x: float, horizon: float | None = None) -> float:
    """``int_0^inf w(t) e^{-x t} dt``.

    Adaptive quadrature on ``[0, horizon]`` plus the exact tail, which solves
    a Lyapunov equation for the conditional state at ``horizon``.

    :raises AccuracyError: if the tail integral does not converge at ``x`` or
        the quadrature error estimate is too large.
    """
    h_eff = effective_hamiltonian(p)
    horizon = _quadrature_horizon(p) if horizon is None else horizon
    drift = -1j * h_eff - 0.5 * x * np.eye(h_eff.shape[0])
    slowest = float(np.max(scipy.linalg.eigvals(drift).real))
    if slowest >= 0.0:
        raise AccuracyError(
            f"waiting-time tail does not converge at x={x!r} (growth rate {2 * slowest:.3e})"
        )

    body, error = scipy.integrate.quad(
        lambda t: waiting_time_density(p, t) * math.exp(-x * t),
        0.0,
        horizon,
        epsabs=1e-14,
        epsrel=1e-13,
        limit=500,
    )
    if error > 1e-10 * max(1.0, abs(body)):
        raise AccuracyError(f"quadrature error {error:.3e} at x={x!r}")

    psi = expm(-1j * h_eff, horizon) @ basis_state(0)
    gram = scipy.linalg.solve_continuous_lyapunov(drift, -np.outer(psi, psi.conj()))
    tail = p.gamma * math.exp(-x * horizon) * float(gram[1, 1].real)
    return float(body) + tail


def renewal_scalar_scgf(p: ModelParams, s: float) -> float:
    """SCGF from the scalar renewal equation ``e^{-s} What(x) = 1``.

    Without emissions (``gamma == 0``) there is no solution; the degenerate
    branch ``theta = 0`` is returned with a :class:`DegeneracyWarning`.
    """
    if p.gamma == 0.0:
        warnings.warn(
            "no emissions at gamma=0; returning the degenerate branch theta=0",
            DegeneracyWarning,
            stacklevel=2,
        )
        return 0.0
    rates = scipy.linalg.eigvals(-1j * effective_hamiltonian(p)).real
    lower = 2.0 * float(np.max(rates))
    return solve_decreasing(lambda x: math.log(laplace_waiting_time(p, x)) - s, lower, s)
