"""Command line: rate reports, sweeps, simulation, fitting, schedules, verify.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 verification
failure.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass

import click
import numpy as np

from ratebound import verification
from ratebound.network import (
    Imitate,
    Network,
    build_schedule,
    is_strongly_connected,
    network_from_json,
    network_to_json,
    replay_knowledge,
)
from ratebound.rates import rate_report, sweep_figure1
from ratebound.signal_models import (
    BinarySymmetric,
    SignalModel,
    model_from_json,
    model_to_json,
)
from ratebound.sim_engine import (
    SimConfig,
    fit_rate,
    mistake_curve,
    read_curve_csv,
    resolve_delta,
    write_curve_csv,
)
from ratebound.strategies import (
    ConstantFirstPeriod,
    CoordinationComplete,
    CoordinationConnected,
    OddEven,
    strategy_from_json,
    strategy_to_json,
)


class ConfigError(Exception):
    """Config rejected; carries every violation found, not just the first."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class RunConfig:
    """A parsed simulation request: the engine config plus output path."""

    sim: SimConfig
    out: str | None = None


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError([f"{what}: cannot read {path}: {exc}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{what}: malformed JSON in {path}: {exc}"]) from None


def _resolve_section(doc: dict, key: str, violations: list[str]):
    """A section is given inline as an object or as a path to a JSON file."""
    value = doc[key]
    if isinstance(value, str):
        try:
            return _load_json(value, key)
        except ConfigError as exc:
            violations.extend(exc.violations)
            return None
    if isinstance(value, dict):
        return value
    violations.append(f"{key}: must be an object or a file path")
    return None


def parse_config(path: str) -> RunConfig:
    """Parse and fully validate a simulation config file.

    Raises ConfigError carrying the complete list of violations, each
    prefixed with the config field it concerns.
    """
    doc = _load_json(path, "config")
    if not isinstance(doc, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    violations: list[str] = []

    model: SignalModel | None = None
    if "model" not in doc:
        violations.append("model: required")
    else:
        section = _resolve_section(doc, "model", violations)
        if section is not None:
            try:
                model = model_from_json(section)
            except (ValueError, TypeError) as exc:
                violations.append(f"model: {exc}")
        if model is not None:
            violations.extend(f"model: {v}" for v in model.validate())

    network: Network | None = None
    if "network" in doc:
        section = _resolve_section(doc, "network", violations)
        if section is not None:
            try:
                network = network_from_json(section)
            except (ValueError, TypeError) as exc:
                violations.append(f"network: {exc}")
    elif model is not None:
        network = Network.complete(model.n_agents)

    strategy = None
    if "strategy" not in doc:
        violations.append("strategy: required")
    else:
        try:
            strategy = strategy_from_json(doc["strategy"])
        except (ValueError, TypeError) as exc:
            violations.append(f"strategy: {exc}")

    horizon = doc.get("horizon")
    if not isinstance(horizon, int) or horizon < 1:
        violations.append("horizon: must be a positive integer")
    replications = doc.get("replications")
    if not isinstance(replications, int) or replications < 1:
        violations.append("replications: must be a positive integer")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        violations.append("seed: must be an integer")
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        violations.append("out: must be a path string")

    if model is not None and network is not None and model.n_agents != network.n:
        violations.append(
            f"model/network: model has {model.n_agents} agents but the "
            f"network has {network.n}"
        )
    if model is not None and strategy is not None:
        if isinstance(strategy, (CoordinationComplete, CoordinationConnected)):
            try:
                resolve_delta(model, strategy.delta)
            except ValueError as exc:
                violations.append(f"strategy.delta: {exc}")
        if isinstance(strategy, ConstantFirstPeriod):
            if strategy.state >= model.states.n_states:
                violations.append("strategy.state: state index out of range")
        if isinstance(strategy, OddEven) and not isinstance(
            model.family, BinarySymmetric
        ):
            violations.append(
                "strategy/model: the odd/even strategy requires symmetric "
                "binary signals"
            )
    if network is not None and strategy is not None:
        everyone = tuple(range(network.n))
        complete = all(h == everyone for h in network.neighborhoods)
        if isinstance(strategy, CoordinationConnected) and not is_strongly_connected(
            network
        ):
            violations.append(
                "strategy/network: the connected coordination strategy "
                "requires a strongly connected network"
            )
        if isinstance(strategy, (CoordinationComplete, OddEven)) and not complete:
            violations.append(
                "strategy/network: this strategy requires a complete network"
            )
    if violations:
        raise ConfigError(violations)
    try:
        sim = SimConfig(model, network, strategy, horizon, replications, seed)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    return RunConfig(sim=sim, out=out)


def run_config_to_json(run: RunConfig) -> dict:
    """Inverse of parse_config, for config round-trips."""
    doc = {
        "model": model_to_json(run.sim.model),
        "network": network_to_json(run.sim.network),
        "strategy": strategy_to_json(run.sim.strategy),
        "horizon": run.sim.horizon,
        "replications": run.sim.replications,
        "seed": run.sim.seed,
    }
    if run.out is not None:
        doc["out"] = run.out
    return doc


def emit_sweep_csv(rows, path) -> None:
    """Byte-stable sweep CSV: `q,raut,rmaj` header, 6 decimals, LF endings."""
    try:
        with open(path, "w", newline="") as fh:
            fh.write(_sweep_text(rows))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from None


def _sweep_text(rows) -> str:
    return "q,raut,rmaj\n" + "".join(
        f"{q:.6f},{raut:.6f},{rmaj:.6f}\n" for q, raut, rmaj in rows
    )


def _fit_dict(fit) -> dict:
    return {
        "rate": None if math.isnan(fit.rate) else fit.rate,
        "stderr": None if math.isnan(fit.stderr) else fit.stderr,
        "usable": fit.usable,
        "n_points": fit.n_points,
    }


def _schedule_doc(net: Network, schedule, knowledge) -> dict:
    directives = [
        [
            {"action": "imitate", "source": d.source, "offset": d.source_offset}
            if isinstance(d, Imitate)
            else {"action": "repeat", "offset": d.own_offset}
            for d in row
        ]
        for row in schedule.directives
    ]
    return {
        "n": net.n,
        "block_length": schedule.M,
        "voting_periods": {"first": 1, "stride": schedule.M},
        "directives": directives,
        "harvest": [
            [list(entry) for entry in entries] for entries in schedule.harvest
        ],
        "full_knowledge": all(k == set(range(net.n)) for k in knowledge),
    }


def _echo_or_write(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        try:
            with open(out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write {out}: {exc}") from None
        click.echo(f"wrote {out}")


@click.group(name="ratebound")
def cli() -> None:
    """Learning-rate constants and strategy simulations on observation networks."""


@cli.group(name="rates")
def rates_group() -> None:
    """Rate constants of a signal model."""


@rates_group.command(name="show")
@click.option("--model", "model_path", required=True, help="Model JSON file.")
def rates_show(model_path: str) -> None:
    """Print the full rate report of a model as JSON."""
    model = model_from_json(_load_json(model_path, "model"))
    violations = model.validate()
    if violations:
        raise ConfigError([f"model: {v}" for v in violations])
    report = rate_report(model)
    click.echo(json.dumps(report.as_dict(), indent=2, sort_keys=True))


def _sweep_options(fn):
    fn = click.option("--from", "from_q", type=float, default=0.51,
                      show_default=True, help="Lowest signal precision.")(fn)
    fn = click.option("--to", "to_q", type=float, default=0.99,
                      show_default=True, help="Highest signal precision.")(fn)
    fn = click.option("--points", type=int, default=200, show_default=True,
                      help="Number of grid points.")(fn)
    fn = click.option("--out", type=str, default=None,
                      help="CSV file (stdout when omitted).")(fn)
    return fn


def _run_sweep(from_q: float, to_q: float, points: int, out: str | None) -> None:
    if not (0.5 < from_q < 1.0 and 0.5 < to_q < 1.0):
        raise ValueError("sweep bounds must lie in (1/2, 1)")
    if to_q < from_q:
        raise ValueError("--to must be at least --from")
    if points < 1:
        raise ValueError("--points must be a positive integer")
    grid = [from_q] if points == 1 else np.linspace(from_q, to_q, points)
    rows = sweep_figure1(grid)
    if out is None:
        click.echo(_sweep_text(rows), nl=False)
    else:
        emit_sweep_csv(rows, out)
        click.echo(f"wrote {out}")


@rates_group.command(name="sweep")
@_sweep_options
def rates_sweep(from_q, to_q, points, out) -> None:
    """Sweep autarky and bounded rates across signal precisions."""
    _run_sweep(from_q, to_q, points, out)


@cli.command(name="sweep")
@_sweep_options
def sweep(from_q, to_q, points, out) -> None:
    """Sweep autarky and bounded rates across signal precisions."""
    _run_sweep(from_q, to_q, points, out)


@cli.command(name="simulate")
@click.option("--config", "config_path", required=True,
              help="Simulation config JSON file.")
@click.option("--out", type=str, default=None,
              help="Curve CSV file (overrides the config's own).")
def simulate(config_path: str, out: str | None) -> None:
    """Estimate a mistake curve by Monte Carlo and write it as CSV."""
    run = parse_config(config_path)
    target = out or run.out
    if target is None:
        raise ValueError('an output path is required (--out or "out" in the config)')
    curve = mistake_curve(run.sim)
    write_curve_csv(curve, target)
    click.echo(f"wrote {target}")


@cli.command(name="fit")
@click.option("--curve", "curve_path", required=True, help="Curve CSV file.")
@click.option("--window", required=True,
              help="Fit window as first:last (1-based periods, inclusive).")
def fit(curve_path: str, window: str) -> None:
    """Fit exponential decay rates on a stored curve; prints a JSON report."""
    parts = window.split(":")
    if len(parts) != 2:
        raise ValueError("window must look like first:last, e.g. 5:20")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError("window must look like first:last, e.g. 5:20") from None
    try:
        curve = read_curve_csv(curve_path)
    except OSError as exc:
        raise ValueError(f"cannot read {curve_path}: {exc}") from None
    report = {
        "window": [lo, hi],
        "trials": curve.trials,
        "pooled": _fit_dict(fit_rate(curve, (lo, hi))),
        "agents": [
            _fit_dict(fit_rate(curve, (lo, hi), agent=i))
            for i in range(curve.n_agents)
        ],
    }
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@cli.command(name="schedule")
@click.option("--network", "network_path", type=str, default=None,
              help="Network JSON file.")
@click.option("--complete", "complete_n", type=int, default=None,
              help="Use a complete network of this size.")
@click.option("--cycle", "cycle_n", type=int, default=None,
              help="Use a directed cycle of this size.")
@click.option("--random", "random_n", type=int, default=None,
              help="Use a random strongly connected network of this size.")
@click.option("--edge-prob", type=float, default=0.35, show_default=True,
              help="Edge probability for --random.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for --random.")
@click.option("--out", type=str, default=None,
              help="Schedule JSON file (stdout when omitted).")
def schedule(network_path, complete_n, cycle_n, random_n, edge_prob, seed, out):
    """Build and certify the vote-propagation schedule of a network."""
    sources = [s for s in (network_path, complete_n, cycle_n, random_n)
               if s is not None]
    if len(sources) != 1:
        raise ValueError(
            "choose exactly one of --network, --complete, --cycle, --random"
        )
    if network_path is not None:
        net = network_from_json(_load_json(network_path, "network"))
    elif complete_n is not None:
        net = Network.complete(complete_n)
    elif cycle_n is not None:
        net = Network.directed_cycle(cycle_n)
    else:
        net = Network.random_strongly_connected(random_n, edge_prob, seed)
    sched = build_schedule(net)
    knowledge = replay_knowledge(net, sched)
    doc = _schedule_doc(net, sched, knowledge)
    _echo_or_write(json.dumps(doc, indent=2, sort_keys=True) + "\n", out)


@cli.command(name="verify")
@click.option("--check", "checks", multiple=True,
              type=click.Choice(verification.CHECK_NAMES),
              help="Run only these checks (repeatable; default: all).")
def verify(checks) -> None:
    """Run the verification suite; exits 3 if any check fails."""
    results = verification.run_checks(list(checks) or None)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        click.echo(
            f"{status} {result.name} ({result.seconds:.1f}s): {result.detail}"
        )
    failed = sum(1 for r in results if not r.passed)
    click.echo(f"{len(results) - failed}/{len(results)} checks passed")
    if failed:
        sys.exit(3)


def main(argv=None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except ConfigError as exc:
        for violation in exc.violations:
            click.echo(f"error: {violation}", err=True)
        sys.exit(1)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except (RuntimeError, OSError, MemoryError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
