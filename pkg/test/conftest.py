from __future__ import annotations

import typing
from pathlib import Path

import numpy as np
import pytest

from jumpcontrol import mcwf
from jumpcontrol.model import ControlPolicy

from . import V_SYSTEM


@pytest.fixture
def rng(request: pytest.FixtureRequest) -> np.random.Generator:
    """A generator seeded from the test id, so every test draws its own numbers."""
    seed = sum(ord(c) * (i + 1) for i, c in enumerate(request.node.nodeid))
    return np.random.default_rng(seed)


@pytest.fixture(scope="session")
def uncontrolled_sampler() -> mcwf.TrajectorySampler:
    return mcwf.TrajectorySampler(V_SYSTEM, ControlPolicy.none())


@pytest.fixture(scope="session")
def stationary_records(
    uncontrolled_sampler: mcwf.TrajectorySampler,
) -> list[mcwf.TrajectoryRecord]:
    """5000 stationary trajectories of length 200 without control."""
    return mcwf.sample_trajectories(
        uncontrolled_sampler, 200.0, 5000, seed=20240611, initial="stationary", threads=4
    )


class ConfigWriter(typing.Protocol):
    def __call__(self, text: str) -> Path:
        ...


@pytest.fixture
def write_config(tmp_path: Path) -> ConfigWriter:
    def write(text: str) -> Path:
        path = tmp_path / "run.toml"
        path.write_text(text, encoding="utf-8")
        return path

    return write
