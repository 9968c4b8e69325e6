from __future__ import annotations

import csv
import json
import typing
from pathlib import Path

import pytest

from jumpcontrol import __version__, cli, sens
from jumpcontrol.exceptions import ConvergenceError
from jumpcontrol.util.output import read_config_echo

from .conftest import ConfigWriter


def _table(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as fp:
        body = [line for line in fp if not line.startswith("#")]
    return list(csv.DictReader(body))


def _run(command: str, config: Path | None, output: Path, *extra: str) -> int:
    argv = [command, "--output", str(output), *extra]
    if config is not None:
        argv += ["--config", str(config)]
    return cli.main(argv)


SMALL = """
[grids]
s = [-0.1, 0.0, 0.1]
t = [0.0, 1.5, 3.0]

[trajectories]
n_traj = 6
t_max = 20.0

[rate]
k = [0.3, 0.4]
"""


class TestExactCommands:
    def test_steady(self, tmp_path: Path) -> None:
        assert _run("steady", None, tmp_path) == cli.EXIT_OK
        state = _table(tmp_path / "steady.csv")
        assert len(state) == 9
        assert sum(float(row["real"]) for row in state if row["i"] == row["j"]) == pytest.approx(1.0)
        (activity,) = _table(tmp_path / "activity.csv")
        assert float(activity["k_scgf"]) == pytest.approx(float(activity["k_stationary"]), abs=1e-6)

    def test_scgf(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config(SMALL)
        assert _run("scgf", config, tmp_path) == cli.EXIT_OK
        rows = _table(tmp_path / "scgf.csv")
        assert [row["s"] for row in rows] == ["-0.10000000000000001", "0", "0.10000000000000001"]
        assert abs(float(rows[1]["theta"])) <= 1e-12
        assert float(rows[0]["k"]) > float(rows[2]["k"])
        assert not (tmp_path / "g.csv").exists()
        assert read_config_echo(tmp_path / "scgf.csv").grids.s == (-0.1, 0.0, 0.1)

    def test_controlled_scgf_and_g(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config(
            """
            [policy]
            kind = "rotate-away"
            delta_t = 3.0

            [grids]
            s = [0.0]
            x = [0.0, 0.5]
            """
        )
        assert _run("scgf", config, tmp_path) == cli.EXIT_OK
        (row,) = _table(tmp_path / "scgf.csv")
        assert abs(float(row["theta"])) <= 1e-9
        g = _table(tmp_path / "g.csv")
        assert float(g[0]["g"]) == pytest.approx(0.0, abs=1e-12)
        assert float(g[1]["g"]) < 0.0

    def test_survival_and_occupations(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config(SMALL)
        assert _run("survival", config, tmp_path) == cli.EXIT_OK
        assert _run("occupations", config, tmp_path) == cli.EXIT_OK
        survival = _table(tmp_path / "survival.csv")
        assert [float(row["survival"]) for row in survival][0] == pytest.approx(1.0)
        assert float(survival[1]["survival"]) == pytest.approx(0.43, abs=0.01)
        for row in _table(tmp_path / "occupations.csv"):
            assert float(row["p0"]) + float(row["p1"]) + float(row["p2"]) == pytest.approx(1.0)

    def test_rate(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        assert _run("rate", write_config(SMALL), tmp_path) == cli.EXIT_OK
        rows = _table(tmp_path / "rate.csv")
        assert [row["k"] for row in rows] == ["0.29999999999999999", "0.40000000000000002"]
        assert all(float(row["phi"]) >= 0.0 for row in rows)
        assert {row["boundary"] for row in rows} == {"0"}

    def test_sweep_dt(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config('[policy]\nkind = "rotate-away"\ndelta_t = 3.0\n[sweep]\ndelta_t = [1.0, 3.0]\n')
        assert _run("sweep-dt", config, tmp_path, "--threads", "2") == cli.EXIT_OK
        rows = _table(tmp_path / "sweep-dt.csv")
        assert [float(row["delta_t"]) for row in rows] == [1.0, 3.0]
        for row in rows:
            assert float(row["k_controlled"]) >= float(row["k_uncontrolled"])
        assert rows[0]["k_uncontrolled"] == rows[1]["k_uncontrolled"]

    def test_hybrid(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config(
            '[policy]\nkind = "reset"\ndelta_t = 1.0\nrepeats = "unbounded"\n'
            "[hybrid]\ns = [0.2]\ndivisors = [8, 16]\n"
        )
        assert _run("hybrid", config, tmp_path) == cli.EXIT_OK
        rows = _table(tmp_path / "hybrid.csv")
        assert [float(row["delta_t"]) for row in rows] == [0.125, 0.0625]
        (order,) = _table(tmp_path / "hybrid-order.csv")
        assert order["monotone"] in {"0", "1"}


class TestSampling:
    def test_traj(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config(SMALL)
        assert _run("traj", config, tmp_path, "--seed", "3") == cli.EXIT_OK
        lines = (tmp_path / "trajectories.jsonl").read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        assert header["jumpcontrol"] == __version__
        assert header["command"] == "traj"
        assert header["config"]["trajectories"]["seed"] == 3
        records = [json.loads(line) for line in lines[1:]]
        assert [record["index"] for record in records] == list(range(6))
        assert all(record["initial_age"] == 0.0 for record in records)
        binned = _table(tmp_path / "binned.csv")
        assert len(binned) == 6 * 40

    def test_traj_is_reproducible(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config(SMALL + '\n[policy]\nkind = "reset"\ndelta_t = 2.0\n')
        first, second = tmp_path / "a", tmp_path / "b"
        assert _run("traj", config, first, "--seed", "11") == cli.EXIT_OK
        assert _run("traj", config, second, "--seed", "11", "--threads", "3") == cli.EXIT_OK
        for name in ("trajectories.jsonl", "binned.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_hist(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config(SMALL)
        assert _run("hist", config, tmp_path, "--seed", "5") == cli.EXIT_OK
        rows = _table(tmp_path / "histogram.csv")
        assert sum(int(row["count"]) for row in rows) == 6
        (moments,) = _table(tmp_path / "moments.csv")
        assert int(moments["n_traj"]) == 6
        assert float(moments["activity"]) == pytest.approx(float(moments["mean"]) / 20.0)

    def test_hist_without_emissions(self, tmp_path: Path, write_config: ConfigWriter) -> None:
        config = write_config(SMALL + "\n[model]\ngamma = 0.0\n")
        assert _run("hist", config, tmp_path, "--seed", "5") == cli.EXIT_OK
        assert (tmp_path / "histogram.csv").exists()
        assert not (tmp_path / "moments.csv").exists()


class TestErrors:
    @pytest.mark.parametrize("command", ["traj", "hist"])
    def test_missing_seed(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str], command: str
    ) -> None:
        assert _run(command, None, tmp_path) == cli.EXIT_CONFIG
        assert "trajectories.seed" in capsys.readouterr().err

    def test_bad_config(self, tmp_path: Path, write_config: ConfigWriter, capsys: pytest.CaptureFixture[str]) -> None:
        config = write_config("[model]\ngamma = -4.0\n")
        assert _run("scgf", config, tmp_path) == cli.EXIT_CONFIG
        err = capsys.readouterr().err
        assert err.startswith("jumpcontrol: error: ")
        assert "model.gamma" in err
        assert not (tmp_path / "scgf.csv").exists()

    def test_missing_config(self, tmp_path: Path) -> None:
        assert _run("scgf", tmp_path / "absent.toml", tmp_path) == cli.EXIT_CONFIG

    @pytest.mark.parametrize(
        "command, policy",
        [
            ("hybrid", ""),
            ("hybrid", '[policy]\nkind = "reset"\ndelta_t = 1.0\n'),
            ("sweep-dt", ""),
        ],
    )
    def test_policy_required(self, tmp_path: Path, write_config: ConfigWriter, command: str, policy: str) -> None:
        assert _run(command, write_config(policy), tmp_path) == cli.EXIT_CONFIG

    def test_negative_threads(self, tmp_path: Path) -> None:
        assert _run("steady", None, tmp_path, "--threads", "-1") == cli.EXIT_CONFIG

    def test_negative_seed(self, tmp_path: Path) -> None:
        assert _run("traj", None, tmp_path, "--seed", "-1") == cli.EXIT_CONFIG

    def test_numerical_failure(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        def fail(*args: typing.Any, **kwargs: typing.Any) -> typing.NoReturn:
            raise ConvergenceError("power iteration", 10, 1.0)

        monkeypatch.setattr(sens, "curve_from", fail)
        assert _run("scgf", None, tmp_path) == cli.EXIT_NUMERICAL

    def test_unknown_command(self) -> None:
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["bogus"])
        assert excinfo.value.code == 2

    def test_version(self, capsys: pytest.CaptureFixture[str]) -> None:
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["--version"])
        assert excinfo.value.code == 0
        assert __version__ in capsys.readouterr().out
