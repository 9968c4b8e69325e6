"""
Command-line entry point.

.. code-block:: bash

    jumpcontrol scgf --config docs/example-config.toml --output out/
    jumpcontrol hist --config run.toml --seed 7 --threads 0

Every command writes CSV (or JSON lines) into the output directory. Each
file starts with the package version, the command and the full configuration
as JSON.
"""

from __future__ import annotations

import argparse
import functools
import logging
import os
import sys
import typing

from . import add_stderr_logger, mcwf, sens, xens
from ._version import __version__
from .exceptions import ConfigError, JumpControlError, NumericalError
from .hybrid import convergence_study
from .liouville import steady_state
from .model import ControlPolicy
from .util.config import RunConfig, load_config
from .util.output import write_csv, write_jsonl
from .util.sweep import ordered_map

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class Command(typing.NamedTuple):
    run: typing.Callable[[RunConfig, str, int], list[str]]
    help: str


def _path(output: str, name: str) -> str:
    return os.path.join(output, name)


def _theta(config: RunConfig, policy: ControlPolicy | None = None) -> sens.ScgfFunction:
    p = config.model.params()
    policy = config.policy.policy() if policy is None else policy
    if policy.controlled:
        return functools.partial(xens.controlled_scgf, policy, p)
    return functools.partial(sens.scgf, p)


def _require_seed(config: RunConfig, command: str) -> int:
    seed = config.trajectories.seed
    if seed is None:
        raise ConfigError(f"{command} needs trajectories.seed or --seed")
    return seed


def run_steady(config: RunConfig, output: str, threads: int) -> list[str]:
    p = config.model.params()
    rho = steady_state(p)
    state = _path(output, "steady.csv")
    write_csv(
        state,
        "steady",
        config,
        ("i", "j", "real", "imag"),
        [(i, j, float(rho[i, j].real), float(rho[i, j].imag)) for i in range(3) for j in range(3)],
    )
    activity = _path(output, "activity.csv")
    write_csv(
        activity,
        "steady",
        config,
        ("k_stationary", "k_scgf", "chi"),
        [(sens.stationary_activity(p), sens.activity(p, 0.0), sens.susceptibility(p, 0.0))],
    )
    return [state, activity]


def run_survival(config: RunConfig, output: str, threads: int) -> list[str]:
    p = config.model.params()
    policy = config.policy.policy()
    path = _path(output, "survival.csv")
    write_csv(
        path,
        "survival",
        config,
        ("t", "survival", "survival_uncontrolled"),
        [(t, mcwf.survival(p, policy, t), mcwf.survival(p, None, t)) for t in config.grids.t],
    )
    return [path]


def run_occupations(config: RunConfig, output: str, threads: int) -> list[str]:
    p = config.model.params()
    path = _path(output, "occupations.csv")
    write_csv(
        path,
        "occupations",
        config,
        ("t", "p0", "p1", "p2"),
        [(t, *mcwf.occupations(p, t)) for t in config.grids.t],
    )
    return [path]


def run_scgf(config: RunConfig, output: str, threads: int) -> list[str]:
    curve = sens.curve_from(_theta(config), config.grids.s, threads=threads)
    path = _path(output, "scgf.csv")
    write_csv(path, "scgf", config, ("s", "theta", "k", "chi"), list(curve.rows()))
    written = [path]

    if config.grids.x is not None:
        p = config.model.params()
        policy = config.policy.policy()
        g_path = _path(output, "g.csv")
        values = [(x, xens.g_of_x(policy, p, x)) for x in config.grids.x]
        write_csv(g_path, "scgf", config, ("x", "g"), values)
        written.append(g_path)
    return written


def run_rate(config: RunConfig, output: str, threads: int) -> list[str]:
    theta = _theta(config)
    bounds = (config.rate.s_min, config.rate.s_max)
    k_grid = config.rate.k if config.rate.k is not None else sens.default_k_grid(theta, bounds, config.rate.num)
    result = sens.legendre_transform(theta, k_grid, bounds, threads)
    path = _path(output, "rate.csv")
    write_csv(
        path,
        "rate",
        config,
        ("k", "phi", "s", "boundary"),
        [
            (float(k), float(phi), float(s), bool(edge))
            for k, phi, s, edge in zip(result.k, result.phi, result.s, result.boundary)
        ],
    )
    return [path]


def run_traj(config: RunConfig, output: str, threads: int) -> list[str]:
    section = config.trajectories
    seed = _require_seed(config, "traj")
    sampler = mcwf.TrajectorySampler(config.model.params(), config.policy.policy(), section.micro_step)
    records = mcwf.sample_trajectories(
        sampler, section.t_max, section.n_traj, seed, section.initial or "reset", threads
    )
    path = _path(output, "trajectories.jsonl")
    write_jsonl(path, "traj", config, (record.as_dict() for record in records))

    binned = _path(output, "binned.csv")
    rows = []
    for record in records:
        activity = mcwf.binned_activity(record, section.bin_width)
        for start, stop, rate in zip(activity.edges[:-1], activity.edges[1:], activity.rate):
            rows.append((record.index, float(start), float(stop), float(rate)))
    write_csv(binned, "traj", config, ("trajectory", "t_start", "t_end", "rate"), rows)
    return [path, binned]


def run_hist(config: RunConfig, output: str, threads: int) -> list[str]:
    section = config.trajectories
    seed = _require_seed(config, "hist")
    histogram = mcwf.emission_histogram(
        config.model.params(),
        config.policy.policy(),
        section.t_max,
        section.n_traj,
        seed,
        micro_step=section.micro_step,
        initial=section.initial or "stationary",
        threads=threads,
    )
    path = _path(output, "histogram.csv")
    write_csv(path, "hist", config, ("K", "count", "scaled_log_prob", "rate"), list(histogram.rows()))

    if histogram.mean == 0.0:
        log.warning("No emissions in any trajectory; skipping moments.csv")
        return [path]
    moments = _path(output, "moments.csv")
    t = histogram.t
    write_csv(
        moments,
        "hist",
        config,
        ("n_traj", "mean", "variance", "fano_factor", "activity", "scaled_variance"),
        [
            (
                histogram.n_traj,
                histogram.mean,
                histogram.variance,
                histogram.fano_factor,
                histogram.mean / t,
                histogram.variance / t,
            )
        ],
    )
    return [path, moments]


def run_hybrid(config: RunConfig, output: str, threads: int) -> list[str]:
    policy = config.policy.policy()
    if not policy.unbounded:
        raise ConfigError('hybrid needs a policy with repeats = "unbounded"')
    assert policy.delta_t is not None
    steps = [policy.delta_t / divisor for divisor in config.hybrid.divisors]
    study = convergence_study(
        config.model.params(), policy, config.hybrid.s, steps, threads, config.hybrid.scheme
    )
    if not study.all_monotone:
        log.warning("Discrete SCGF errors do not shrink monotonically with the step for every s")

    table = _path(output, "hybrid.csv")
    write_csv(
        table,
        "hybrid",
        config,
        ("s", "delta_t", "theta_discrete", "theta_reference", "abs_err", "rel_err"),
        study.rows,
    )
    order = _path(output, "hybrid-order.csv")
    write_csv(
        order,
        "hybrid",
        config,
        ("s", "order", "extrapolated", "extrapolated_rel_err", "monotone"),
        [(*row, study.monotone[row.s]) for row in study.orders],
    )
    return [table, order]


def run_sweep_dt(config: RunConfig, output: str, threads: int) -> list[str]:
    p = config.model.params()
    policy = config.policy.policy()
    if not policy.controlled:
        raise ConfigError("sweep-dt needs a controlled policy")
    baseline = sens.stencil(functools.partial(sens.scgf, p), 0.0)

    def row(delta_t: float) -> tuple[float, float, float, float, float]:
        controlled = sens.stencil(_theta(config, policy.with_delta_t(delta_t)), 0.0)
        return delta_t, controlled.k, controlled.chi, baseline.k, baseline.chi

    rows = ordered_map(row, config.sweep.delta_t, threads)
    path = _path(output, "sweep-dt.csv")
    write_csv(
        path,
        "sweep-dt",
        config,
        ("delta_t", "k_controlled", "chi_controlled", "k_uncontrolled", "chi_uncontrolled"),
        rows,
    )
    return [path]


COMMANDS: dict[str, Command] = {
    "steady": Command(run_steady, "stationary state and activity"),
    "survival": Command(run_survival, "survival probability over grids.t"),
    "occupations": Command(run_occupations, "no-jump occupations over grids.t"),
    "scgf": Command(run_scgf, "SCGF, activity and susceptibility over grids.s"),
    "rate": Command(run_rate, "rate function by Legendre transform"),
    "traj": Command(run_traj, "sample trajectories as JSON lines"),
    "hist": Command(run_hist, "histogram of emission counts"),
    "hybrid": Command(run_hybrid, "hybrid-controller convergence table"),
    "sweep-dt": Command(run_sweep_dt, "activity and susceptibility against delta_t"),
}


def run(command: str, config: RunConfig, output: str = ".", threads: int = 1) -> list[str]:
    """Run ``command`` and return the paths written."""
    try:
        entry = COMMANDS[command]
    except KeyError:
        raise ConfigError(f"unknown command {command!r}") from None
    log.info("Running %s into %s", command, output)
    written = entry.run(config, output, threads)
    for path in written:
        log.info("Wrote %s", path)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumpcontrol",
        description="Emission statistics of a driven V-system under catch-and-reverse control.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "command",
        choices=list(COMMANDS),
        help="; ".join(f"{name}: {entry.help}" for name, entry in COMMANDS.items()),
    )
    parser.add_argument("--config", help="TOML configuration file (defaults apply when omitted)")
    parser.add_argument("--output", default=".", help="output directory (default: current directory)")
    parser.add_argument("--seed", type=int, help="override trajectories.seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads, 0 for one per CPU")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress (-vv for debug)")
    return parser


def main(argv: typing.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        add_stderr_logger(logging.DEBUG if args.verbose > 1 else logging.INFO)

    try:
        if args.threads < 0:
            raise ConfigError(f"--threads must be non-negative, got {args.threads}")
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        run(args.command, config, args.output, args.threads)
    except NumericalError as e:
        print(f"jumpcontrol: numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except JumpControlError as e:
        print(f"jumpcontrol: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK
