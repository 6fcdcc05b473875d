"""Command line interface.

Exit codes: 0 on success, 2 on configuration errors (bad scenario files,
malformed survey input, out-of-range parameters).
"""

from __future__ import annotations

import json
import sys

import click

from .errors import MotorlanceError
from .feasibility import cost_table, load_survey, tabulate
from .sim import compare_modes, load_scenario, run as run_sim


def _fail_config(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _resolve_scenario(name_or_path: str):
    """Accept a path to a scenario JSON or a bundled scenario name."""
    from pathlib import Path

    from .bundled import bundled_path

    if Path(name_or_path).exists():
        return name_or_path
    bundled = bundled_path("scenarios", f"{name_or_path}.json")
    if bundled.is_file():
        return bundled
    raise MotorlanceError(
        f"no such scenario file or bundled scenario: {name_or_path!r}"
    )


def _emit_json(doc: dict, out: str | None):
    text = json.dumps(doc, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


def _fmt_s(value) -> str:
    return "-" if value is None else f"{value:8.1f}"


def _report_table(report) -> str:
    lines = [
        f"scenario {report.scenario!r}  seed {report.seed}  "
        f"horizon {report.horizon_s:.0f}s",
        f"arrivals {report.arrivals}  served {report.served}  "
        f"escalated {report.escalations}  open at horizon {report.open_at_horizon}",
        f"{'class':<12}{'n':>5}{'mean s':>10}{'median s':>10}{'p90 s':>10}{'util':>8}",
    ]
    for vehicle, stats in sorted(report.per_class.items()):
        lines.append(
            f"{vehicle:<12}{stats['count']:>5}"
            f"{_fmt_s(stats['mean_s']):>10}{_fmt_s(stats['median_s']):>10}"
            f"{_fmt_s(stats['p90_s']):>10}{stats['utilization']:>8.2f}"
        )
    lines.append(
        f"{'overall':<12}{report.served:>5}{_fmt_s(report.mean_response_s):>10}"
        f"{_fmt_s(report.median_response_s):>10}{_fmt_s(report.p90_response_s):>10}"
    )
    return "\n".join(lines)


@click.group()
def main():
    """Community motorlance dispatch toolkit."""


@main.group()
def sim():
    """Deterministic fleet simulation."""


@sim.command("run")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(),
              help="Scenario JSON file or bundled scenario name.")
@click.option("--seed", type=int, default=None,
              help="Override the scenario's demand seed.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the full JSON report here.")
def sim_run(scenario_path, seed, out_path):
    """Simulate one scenario and report response-time metrics."""
    try:
        scenario = load_scenario(_resolve_scenario(scenario_path))
        report = run_sim(scenario, seed=seed)
    except MotorlanceError as err:
        _fail_config(str(err))
    click.echo(_report_table(report))
    if out_path:
        _emit_json(report.to_doc(), out_path)


@sim.command("compare")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(),
              help="Scenario JSON file or bundled scenario name.")
@click.option("--seed", "seeds", type=int, multiple=True,
              help="Demand seed; repeat for a sweep. Default: scenario seed.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the full JSON comparison here.")
def sim_compare(scenario_path, seeds, out_path):
    """Rerun the same demand with a motorlance fleet, then an ambulance
    fleet, and report the mean response-time reduction."""
    try:
        scenario = load_scenario(_resolve_scenario(scenario_path))
        results = [compare_modes(scenario, seed=s) for s in (seeds or [None])]
    except MotorlanceError as err:
        _fail_config(str(err))
    click.echo(f"{'seed':>6}{'motorlance s':>14}{'ambulance s':>13}{'reduction':>11}")
    for result in results:
        red = ("-" if result.reduction_percent is None
               else f"{result.reduction_percent:9.1f}%")
        click.echo(
            f"{result.motorlance.seed:>6}"
            f"{_fmt_s(result.motorlance.mean_response_s):>14}"
            f"{_fmt_s(result.ambulance.mean_response_s):>13}{red:>11}"
        )
    if out_path:
        _emit_json({"comparisons": [r.to_doc() for r in results]}, out_path)


@main.group()
def feasibility():
    """Cost model and survey tabulation."""


@feasibility.command("costs")
@click.option("--budget", type=int, default=None,
              help="Also report how many outfitted units this PHP budget buys.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def feasibility_costs(budget, out_path):
    """Acquisition cost comparison: ambulance vs outfitted motorlance."""
    try:
        table = cost_table(budget_php=budget)
    except MotorlanceError as err:
        _fail_config(str(err))
    width = max(len(k) for k in table)
    for key, value in table.items():
        if isinstance(value, dict):
            cell = "  ".join(f"{k}={v}" for k, v in value.items())
        else:
            cell = value
        click.echo(f"{key:<{width}}  {cell}")
    if out_path:
        _emit_json(table, out_path)


@feasibility.command("survey")
@click.argument("csv_path", type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the stats JSON here (default: stdout).")
def feasibility_survey(csv_path, out_path):
    """Tabulate a community survey CSV."""
    try:
        responses, excluded = load_survey(csv_path)
        stats = tabulate(responses)
    except OSError as err:
        _fail_config(str(err))
    except MotorlanceError as err:
        _fail_config(str(err))
    click.echo(
        f"retained {stats.n} responses ({excluded} excluded for missing fields)"
    )
    click.echo(
        f"female {stats.sex_percent.get('female', 0.0)}%  "
        f"phone {stats.phone_percent}%  internet {stats.internet_percent}%  "
        f"regular app use {stats.regular_app_use_percent}%"
    )
    _emit_json(stats.to_doc(), out_path)


@main.command("serve")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(),
              help="Scenario JSON (or bundled name) providing graph and fleet.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Gateway config JSON (tokens, listen address).")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(scenario_path, config_path, host, port):
    """Run the HTTP/WebSocket gateway over a scenario world."""
    import uvicorn

    from .api import (
        Gateway,
        GatewayConfig,
        create_app,
        gateway_config_from_doc,
        service_for_scenario,
    )
    from dataclasses import replace

    try:
        scenario = load_scenario(_resolve_scenario(scenario_path))
        if config_path:
            with open(config_path, encoding="utf-8") as fh:
                config = gateway_config_from_doc(json.load(fh))
        else:
            config = gateway_config_from_doc({})
        overrides = {}
        if host:
            overrides["host"] = host
        if port:
            overrides["port"] = port
        config = replace(config, **overrides, expiry_poll_s=0.2)
        service = service_for_scenario(scenario)
    except OSError as err:
        _fail_config(str(err))
    except (MotorlanceError, ValueError) as err:
        _fail_config(str(err))
    app = create_app(Gateway(service, config))
    uvicorn.run(app, host=config.host, port=config.port)


if __name__ == "__main__":
    main()
