from __future__ import annotations

import logging
import os
import sys
import typing

import numpy as np
from pydantic import (
    AfterValidator,
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from ..exceptions import ConfigError
from ..model import MAX_REPEATS, ControlKind, ControlPolicy, ModelParams, StepScheme

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

__all__ = (
    "GridSpec",
    "HybridSection",
    "ModelSection",
    "PolicySection",
    "RateSection",
    "RunConfig",
    "SweepSection",
    "TrajectorySection",
    "config_from_json",
    "load_config",
    "parse_config",
)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Section):
    """``num`` evenly spaced points from ``start`` to ``stop`` inclusive."""

    start: float
    stop: float
    num: int = Field(ge=1)

    def values(self) -> tuple[float, ...]:
        return tuple(float(v) for v in np.linspace(self.start, self.stop, self.num))


def _expand_grid(value: typing.Any) -> typing.Any:
    if isinstance(value, dict):
        return GridSpec.model_validate(value).values()
    return value


def _check_grid(values: tuple[float, ...]) -> tuple[float, ...]:
    if not values:
        raise ValueError("grid must not be empty")
    if not all(np.isfinite(values)):
        raise ValueError("grid values must be finite")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("grid must be sorted in increasing order")
    return values


Grid = typing.Annotated[
    typing.Tuple[float, ...], BeforeValidator(_expand_grid), AfterValidator(_check_grid)
]


class ModelSection(_Section):
    omega01: float = Field(1.0, allow_inf_nan=False)
    omega02: float = Field(0.1, allow_inf_nan=False)
    gamma: float = Field(4.0, ge=0.0, allow_inf_nan=False)

    def params(self) -> ModelParams:
        return ModelParams(self.omega01, self.omega02, self.gamma)


class PolicySection(_Section):
    """Control policy; ``repeats = "unbounded"`` repeats the pulse without limit."""

    kind: ControlKind = ControlKind.NONE
    delta_t: typing.Optional[float] = Field(None, gt=0.0, allow_inf_nan=False)
    repeats: typing.Union[typing.Annotated[int, Field(ge=1, le=MAX_REPEATS)], typing.Literal["unbounded"]] = 1

    @model_validator(mode="after")
    def _require_delta_t(self) -> PolicySection:
        if self.kind is not ControlKind.NONE and self.delta_t is None:
            raise ValueError(f"delta_t is required for policy kind {self.kind.value!r}")
        return self

    def policy(self) -> ControlPolicy:
        if self.kind is ControlKind.NONE:
            return ControlPolicy.none()
        repeats = None if self.repeats == "unbounded" else self.repeats
        return ControlPolicy(self.kind, self.delta_t, repeats)


class GridSection(_Section):
    s: Grid = GridSpec(start=-0.5, stop=2.0, num=241).values()
    x: typing.Optional[Grid] = None
    t: Grid = GridSpec(start=0.0, stop=10.0, num=101).values()


class TrajectorySection(_Section):
    n_traj: int = Field(1000, ge=1)
    t_max: float = Field(200.0, gt=0.0, allow_inf_nan=False)
    seed: typing.Optional[int] = Field(None, ge=0)
    micro_step: float = Field(1e-3, gt=0.0, allow_inf_nan=False)
    #: Start just after an emission or in the stationary state. ``traj``
    #: defaults to ``"reset"``, ``hist`` to ``"stationary"``.
    initial: typing.Optional[typing.Literal["reset", "stationary"]] = None
    bin_width: float = Field(0.5, gt=0.0, allow_inf_nan=False)


class RateSection(_Section):
    s_min: float = -0.5
    s_max: float = 2.0
    k: typing.Optional[Grid] = None
    num: int = Field(201, ge=2)

    @model_validator(mode="after")
    def _bracket_zero(self) -> RateSection:
        if not self.s_min < 0.0 < self.s_max:
            raise ValueError("s_min < 0 < s_max is required")
        return self


class HybridSection(_Section):
    s: Grid = (-0.1, 0.2, 0.5)
    #: Steps are ``delta_t / divisor``.
    divisors: tuple[int, ...] = (8, 16, 32, 64)
    scheme: StepScheme = StepScheme.SYMMETRIC

    @field_validator("divisors")
    @classmethod
    def _check_divisors(cls, values: tuple[int, ...]) -> tuple[int, ...]:
        if not values or any(v < 2 for v in values):
            raise ValueError("divisors must be a non-empty list of integers >= 2")
        return tuple(sorted(set(values)))


class SweepSection(_Section):
    delta_t: Grid = (1.0, 2.0, 3.0, 4.0, 5.0)

    @field_validator("delta_t")
    @classmethod
    def _check_delta_t(cls, values: tuple[float, ...]) -> tuple[float, ...]:
        if values[0] <= 0:
            raise ValueError("delta_t values must be positive")
        return values


class RunConfig(_Section):
    """Everything a CLI run depends on; echoed into every output file."""

    model: ModelSection = ModelSection()
    policy: PolicySection = PolicySection()
    grids: GridSection = GridSection()
    trajectories: TrajectorySection = TrajectorySection()
    rate: RateSection = RateSection()
    hybrid: HybridSection = HybridSection()
    sweep: SweepSection = SweepSection()

    def with_seed(self, seed: int) -> RunConfig:
        try:
            section = TrajectorySection.model_validate({**self.trajectories.model_dump(), "seed": seed})
        except ValidationError as e:
            raise ConfigError("invalid seed override", _errors(e)) from e
        return self.model_copy(update={"trajectories": section})


def _errors(e: ValidationError) -> list[str]:
    return [
        f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
        for error in e.errors()
    ]


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate TOML ``text``.

    :raises ConfigError: with the line and column of a syntax error or one
        line per invalid field.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{source}: {e}") from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: invalid configuration", _errors(e)) from e


def load_config(path: str | os.PathLike[str] | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fp:
            text = fp.read()
    except OSError as e:
        raise ConfigError(f"cannot read configuration {os.fspath(path)!r}: {e.strerror}") from e
    log.debug("Loaded configuration from %s", os.fspath(path))
    return parse_config(text, os.fspath(path))


def config_from_json(text: str) -> RunConfig:
    """Re-parse the JSON echo written into output headers."""
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError("invalid configuration echo", _errors(e)) from e
