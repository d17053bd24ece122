"""Command-line interface for tdfit."""

import dataclasses
import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

import click

from . import __version__
from .bench import crlb_column, run_bench, trial_channel
from .config import Config
from .display import (
    console,
    print_bench,
    print_error,
    print_fit,
    print_info,
    print_success,
    progress_bar,
    setup_logging,
)
from .errors import ArgumentError, ConfigError, EstimationError
from .fitting import SolverOptions, estimate_delays
from .frontend import sigma_from_snr, simulate_snapshots
from .scenario import PRESET_ALIASES, Scenario, load_scenario, preset_names, resolve_config
from .storage import (
    emit_csv,
    emit_plotdata,
    load_estimates,
    render_plot,
    save_estimates,
    write_run_metadata,
)
from .utils import as_float_list, complex_to_pairs

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_ESTIMATION = 3


@contextmanager
def _exit_on_error() -> Iterator[None]:
    """Map library errors to messages and exit codes."""
    try:
        yield
    except (ConfigError, ArgumentError) as exc:
        print_error(str(exc))
        sys.exit(EXIT_CONFIG)
    except EstimationError as exc:
        print_error(f"estimation failed: {exc}")
        sys.exit(EXIT_ESTIMATION)
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print_error(f"{where}{exc.strerror or exc}")
        sys.exit(EXIT_IO)


def _load(config: str, seed: Optional[int], trials: Optional[int] = None) -> Scenario:
    scn = load_scenario(resolve_config(config))
    changes = {}
    if seed is not None:
        changes["master_seed"] = seed
    if trials is not None:
        if trials < 1:
            raise ArgumentError(f"--trials must be >= 1, got {trials}")
        changes["trials"] = trials
    return dataclasses.replace(scn, **changes) if changes else scn


def _threads(ctx: click.Context, threads: Optional[int]) -> int:
    if threads is None:
        return ctx.obj["config"].threads
    if threads < 1:
        raise ArgumentError(f"--threads must be >= 1, got {threads}")
    return threads


def _write_outputs(ctx, res, scn: Scenario, command: str, out, plot, plotdata, threads) -> None:
    config: Config = ctx.obj["config"]
    if out:
        emit_csv(res, out)
        if config.get("write_metadata", True):
            write_run_metadata(out, command, scn.to_dict(), threads)
        print_success(f"Wrote {out}")
    if plotdata:
        emit_plotdata(res, plotdata)
        print_success(f"Wrote {plotdata}")
    if plot:
        render_plot(res, plot, fmt=Path(plot).suffix.lstrip(".") or config.get("plot_format"))
        print_success(f"Wrote {plot}")


config_option = click.option(
    "--config",
    "-c",
    "config_name",
    required=True,
    help="Scenario file or preset name (see `tdfit presets`)",
)
seed_option = click.option("--seed", type=int, help="Override the scenario's master seed")
threads_option = click.option("--threads", "-j", type=int, help="Worker threads")


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", "-v", count=True, help="More log output (-vv for debug)")
@click.option("--quiet", "-q", is_flag=True, help="Only print errors")
@click.pass_context
def main(ctx, verbose, quiet):
    """tdfit - multiband time-delay estimation by weighted subspace fitting.

    \b
    COMMANDS:
      simulate     Write simulated channel estimates of a scenario to a file
      estimate     Estimate delays and gains from an estimate file
      bench        Run a Monte-Carlo benchmark scenario
      crlb         Compute the Cramer-Rao bound column of a scenario
      presets      List the shipped scenario presets
    """
    ctx.ensure_object(dict)
    config = Config()
    ctx.obj["config"] = config
    ctx.obj["quiet"] = quiet
    if quiet:
        level = "ERROR"
    elif verbose >= 2:
        level = "DEBUG"
    elif verbose == 1:
        level = "INFO"
    else:
        level = config.log_level
    setup_logging(level)


@main.command()
@config_option
@seed_option
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False), help="Output file")
@click.option("--snr", type=float, help="SNR in dB (default: first point of the scenario)")
@click.option("--snapshots", "-s", type=int, help="Number of snapshots")
@click.option("--noiseless", is_flag=True, help="Write noise-free estimates")
@click.pass_context
def simulate(ctx, config_name, seed, out, snr, snapshots, noiseless):
    """Simulate one channel of a scenario and write its estimates."""
    with _exit_on_error():
        scn = _load(config_name, seed)
        ch, noise_seed = trial_channel(scn, 0, 0)
        if noiseless:
            snr = float("inf")
        elif snr is None:
            snr = scn.snr_at(0)
        count = snapshots if snapshots is not None else scn.snapshots_at(0)
        noise = sigma_from_snr(ch, scn.plan, None, snr + scn.offsets_db)
        estimates = simulate_snapshots(ch, scn.plan, scn.probe(), noise, noise_seed, count)
        save_estimates(
            out,
            estimates,
            channel=ch,
            extra={"scenario": scn.name, "snr_db": float(snr), "master_seed": scn.master_seed},
        )
    if not ctx.obj["quiet"]:
        print_success(f"Wrote {count} snapshot(s) of '{scn.name}' to {out}")


@main.command()
@click.argument("estimate_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--paths", "-k", type=int, help="Number of paths (default: stored channel's)")
@click.option("--q-cols", type=int, help="Hankel columns Q")
@click.option("--unweighted", is_flag=True, help="Ignore per-band noise levels")
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["text", "json"]),
    default="text",
    help="Output format (text or json)",
)
@click.pass_context
def estimate(ctx, estimate_file, paths, q_cols, unweighted, fmt):
    """Estimate delays and gains from ESTIMATE_FILE."""
    config: Config = ctx.obj["config"]
    with _exit_on_error():
        estimates, truth = load_estimates(estimate_file)
        if paths is None:
            if truth is None:
                raise ArgumentError("the file stores no channel; pass --paths")
            paths = truth.k_paths
        fit = estimate_delays(
            estimates,
            paths,
            q_cols=q_cols,
            weighted=not unweighted,
            options=SolverOptions.from_config(config),
            music_grid_factor=int(config.get("music_grid_factor", 10)),
        )
    plan = estimates[0].plan
    if fmt == "json":
        click.echo(
            json.dumps(
                {
                    "delays_s": as_float_list(fit.delays),
                    "delays_ts": as_float_list(fit.delays / plan.sample_period),
                    "gains": complex_to_pairs(fit.gains),
                    "cost": float(fit.cost),
                    "iterations": fit.iterations,
                    "converged": fit.converged,
                    "snapshots": len(estimates),
                },
                indent=2,
            )
        )
        return
    print_fit(fit, plan, truth)


@main.command()
@config_option
@seed_option
@threads_option
@click.option("--out", "-o", type=click.Path(dir_okay=False), help="CSV output file")
@click.option("--plot", type=click.Path(dir_okay=False), help="Plot file (svg, pdf, png)")
@click.option("--plotdata", type=click.Path(dir_okay=False), help="Plot data (JSON)")
@click.option("--trials", type=int, help="Override the number of trials")
@click.pass_context
def bench(ctx, config_name, seed, threads, out, plot, plotdata, trials):
    """Run a Monte-Carlo benchmark scenario."""
    config: Config = ctx.obj["config"]
    quiet = ctx.obj["quiet"]
    with _exit_on_error():
        scn = _load(config_name, seed, trials)
        workers = _threads(ctx, threads)
        if not quiet:
            print_info(
                f"{scn.name}: {len(scn.axis_values)} {scn.axis} points x {scn.trials} trials, "
                f"{', '.join(scn.estimators)}"
            )
        total = len(scn.axis_values) * scn.trials
        with progress_bar(total, "trials", enabled=not quiet) as advance:
            res = run_bench(scn, workers, SolverOptions.from_config(config), advance)
        _write_outputs(ctx, res, scn, "bench", out, plot, plotdata, workers)
    if not quiet:
        print_bench(res, title=scn.name)


@main.command()
@config_option
@seed_option
@threads_option
@click.option("--out", "-o", type=click.Path(dir_okay=False), help="CSV output file")
@click.option("--plot", type=click.Path(dir_okay=False), help="Plot file (svg, pdf, png)")
@click.option("--plotdata", type=click.Path(dir_okay=False), help="Plot data (JSON)")
@click.option("--trials", type=int, help="Override the number of trials")
@click.pass_context
def crlb(ctx, config_name, seed, threads, out, plot, plotdata, trials):
    """Compute the CRLB column of a scenario without running estimators."""
    quiet = ctx.obj["quiet"]
    with _exit_on_error():
        scn = _load(config_name, seed, trials)
        workers = _threads(ctx, threads)
        total = len(scn.axis_values) * scn.trials
        with progress_bar(total, "bounds", enabled=not quiet) as advance:
            res = crlb_column(scn, workers, advance)
        _write_outputs(ctx, res, scn, "crlb", out, plot, plotdata, workers)
    if not quiet:
        print_bench(res, title=f"{scn.name} (CRLB)")


@main.command()
def presets():
    """List the shipped scenario presets."""
    aliases = {target: alias for alias, target in PRESET_ALIASES.items()}
    for name in preset_names():
        if name in aliases:
            console.print(f"{name}  (alias: {aliases[name]})")
        else:
            console.print(name)


if __name__ == "__main__":
    main()
