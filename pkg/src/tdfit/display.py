"""Display and formatting utilities using Rich."""

import logging
import math
from contextlib import contextmanager
from typing import Iterator, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from .bench import BenchResult
from .fitting import FitResult
from .model import BandPlan, MultipathChannel

# Results go to stdout; diagnostics, logs and progress to stderr
console = Console()
err_console = Console(stderr=True)


def setup_logging(level: str = "WARNING") -> None:
    """Route the ``tdfit`` loggers through a RichHandler on stderr."""
    logger = logging.getLogger("tdfit")
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    handler = RichHandler(console=err_console, show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level.upper())


def print_error(message: str) -> None:
    """Print an error message."""
    err_console.print(f"[bold red]Error:[/bold red] {escape(message)}", highlight=False)


def print_success(message: str) -> None:
    """Print a success message."""
    err_console.print(f"[green][OK][/green] {escape(message)}", highlight=False)


def print_info(message: str) -> None:
    """Print an info message."""
    err_console.print(f"[cyan]>>>[/cyan] {escape(message)}", highlight=False)


def _ns(seconds: float) -> str:
    return "-" if math.isnan(seconds) else f"{seconds * 1e9:.6f}"


def print_fit(
    fit: FitResult,
    plan: BandPlan,
    truth: Optional[MultipathChannel] = None,
) -> None:
    """Table of estimated delays and gains, with ground truth when known."""
    table = Table(title="Estimated paths", show_header=True, header_style="bold")
    table.add_column("#", style="dim", justify="right")
    table.add_column("Delay [ns]", style="cyan", justify="right")
    table.add_column("Delay [T_s]", justify="right")
    table.add_column("|gain|", justify="right")
    table.add_column("phase [rad]", justify="right")
    if truth is not None:
        table.add_column("True delay [ns]", style="dim", justify="right")
    for k, (tau, gain) in enumerate(zip(fit.delays, fit.gains)):
        cells = [
            str(k),
            _ns(tau),
            f"{tau / plan.sample_period:.6f}",
            f"{abs(gain):.4f}",
            f"{math.atan2(gain.imag, gain.real):+.4f}",
        ]
        if truth is not None:
            cells.append(_ns(truth.delays[k]) if k < truth.k_paths else "-")
        table.add_row(*cells)
    console.print(table)
    status = "converged" if fit.converged else "[yellow]not converged[/yellow]"
    console.print(
        f"[dim]{status} after {fit.iterations} iterations, cost {fit.cost:.3e}[/dim]"
    )


def print_bench(res: BenchResult, title: str = "Benchmark") -> None:
    """Table of RMSE rows."""
    table = Table(title=title, show_header=True, header_style="bold")
    axis = res.rows[0].axis if res.rows else "axis"
    table.add_column(axis, justify="right")
    table.add_column("Estimator", style="cyan")
    table.add_column("RMSE [ns]", justify="right")
    table.add_column("CRLB [ns]", style="dim", justify="right")
    table.add_column("Trials", justify="right")
    table.add_column("Failures", justify="right")
    for row in res.rows:
        failures = f"[yellow]{row.failures}[/yellow]" if row.failures else "0"
        table.add_row(
            f"{row.axis_value:g}",
            row.estimator,
            _ns(row.rmse_s),
            _ns(row.crlb_s),
            str(row.trials),
            failures,
        )
    console.print(table)


@contextmanager
def progress_bar(total: int, description: str, enabled: bool = True) -> Iterator:
    """Yield an ``advance(n)`` callback backed by a rich progress bar."""
    if not enabled:
        yield lambda n=1: None
        return
    progress = Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=err_console,
        transient=True,
    )
    with progress:
        task = progress.add_task(description, total=total)
        yield lambda n=1: progress.advance(task, n)
