"""File I/O for tdfit: benchmark CSV, plot data, plots, estimate files, provenance."""

import csv
import io
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from . import __version__
from .bench import CSV_HEADER, BenchResult, BenchRow
from .errors import ArgumentError, ConfigError
from .frontend import ChannelEstimate
from .model import BandPlan, MultipathChannel
from .utils import atomic_write_bytes, atomic_write_text, git_revision

logger = logging.getLogger(__name__)

ESTIMATE_SCHEMA = 1

PathLike = Union[str, Path]


def _format_float(value: float) -> str:
    # repr round-trips every double exactly
    return repr(float(value))


def format_csv(res: BenchResult) -> str:
    """CSV text of a benchmark result (header only when empty)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in res.rows:
        writer.writerow(
            [
                row.axis,
                _format_float(row.axis_value),
                row.estimator,
                _format_float(row.rmse_s),
                _format_float(row.crlb_s),
                row.trials,
                row.failures,
            ]
        )
    return buffer.getvalue()


def emit_csv(res: BenchResult, path: PathLike) -> None:
    """Write the benchmark CSV atomically."""
    atomic_write_text(Path(path), format_csv(res))
    logger.info("wrote %d rows to %s", len(res.rows), path)


def read_csv(path: PathLike) -> BenchResult:
    """Parse a CSV written by :func:`emit_csv`."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header {header}", path, 1)
        rows = []
        for line, record in enumerate(reader, start=2):
            try:
                axis, value, estimator, rmse, crlb, trials, failures = record
                rows.append(
                    BenchRow(
                        axis=axis,
                        axis_value=float(value),
                        estimator=estimator,
                        rmse_s=float(rmse),
                        crlb_s=float(crlb),
                        trials=int(trials),
                        failures=int(failures),
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"malformed row: {exc}", path, line) from exc
    return BenchResult(rows)


def _json_float(value: float) -> Optional[float]:
    return None if math.isnan(value) else float(value)


def plot_data(res: BenchResult) -> Dict[str, Any]:
    """Series per estimator plus one CRLB series."""
    axis = res.rows[0].axis if res.rows else None
    series = {}
    for name, rows in res.series().items():
        series[name] = {
            "axis_value": [r.axis_value for r in rows],
            "rmse_s": [_json_float(r.rmse_s) for r in rows],
            "trials": [r.trials for r in rows],
            "failures": [r.failures for r in rows],
        }
    crlb = res.crlb_series()
    return {
        "axis": axis,
        "series": series,
        "crlb": {
            "axis_value": [value for value, _ in crlb],
            "crlb_s": [_json_float(bound) for _, bound in crlb],
        },
    }


def emit_plotdata(res: BenchResult, path: PathLike) -> None:
    """Write :func:`plot_data` as JSON."""
    atomic_write_text(Path(path), json.dumps(plot_data(res), indent=2) + "\n")


AXIS_LABELS = {"snr": "SNR [dB]", "snapshots": "Number of snapshots"}


def render_plot(res: BenchResult, path: PathLike, fmt: Optional[str] = None) -> None:
    """Log-scale RMSE vs axis plot, one line per estimator and a dashed CRLB."""
    from matplotlib.figure import Figure

    if not res.rows:
        raise ArgumentError("nothing to plot: benchmark result is empty")
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".") or "svg"
    fig = Figure(figsize=(6.4, 4.8))
    ax = fig.add_subplot(1, 1, 1)
    for name, rows in res.series().items():
        if name == "crlb":
            continue
        ax.semilogy(
            [r.axis_value for r in rows], [r.rmse_s for r in rows], marker="o", label=name
        )
    crlb = res.crlb_series()
    ax.semilogy([v for v, _ in crlb], [b for _, b in crlb], "k--", label="CRLB")
    axis = res.rows[0].axis
    ax.set_xlabel(AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("RMSE of LOS delay [s]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    buffer = io.BytesIO()
    fig.savefig(buffer, format=fmt, bbox_inches="tight")
    atomic_write_bytes(path, buffer.getvalue())
    logger.info("plot written to %s", path)


def save_estimates(
    path: PathLike,
    estimates: List[ChannelEstimate],
    channel: Optional[MultipathChannel] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> None:
    """Write snapshots of one band plan as a YAML estimate file."""
    if not estimates:
        raise ArgumentError("no estimates to save")
    document: Dict[str, Any] = {
        "schema": ESTIMATE_SCHEMA,
        "plan": estimates[0].plan.to_dict(),
    }
    if channel is not None:
        document["channel"] = channel.to_dict()
    if extra:
        document.update(extra)
    document["snapshots"] = [e.to_dict() for e in estimates]
    atomic_write_text(Path(path), yaml.safe_dump(document, sort_keys=False))


def load_estimates(
    path: PathLike,
) -> Tuple[List[ChannelEstimate], Optional[MultipathChannel]]:
    """Read an estimate file; returns the snapshots and the stored channel, if any."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            document = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {exc}", path, mark.line + 1 if mark else None)
    if not isinstance(document, dict) or document.get("schema") != ESTIMATE_SCHEMA:
        raise ConfigError(f"not an estimate file (expected schema {ESTIMATE_SCHEMA})", path)
    try:
        plan = BandPlan.from_dict(document["plan"])
        estimates = [ChannelEstimate.from_dict(s, plan) for s in document["snapshots"]]
        channel = None
        if document.get("channel") is not None:
            channel = MultipathChannel.from_dict(document["channel"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed estimate file: {exc}", path) from exc
    if not estimates:
        raise ConfigError("estimate file holds no snapshots", path)
    return estimates, channel


def metadata_path(out: PathLike) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".meta.yaml")


def write_run_metadata(
    out: PathLike, command: str, scenario: Dict[str, Any], threads: int
) -> Path:
    """Write ``<out>.meta.yaml`` describing how ``out`` was produced."""
    meta: Dict[str, Any] = {
        "command": command,
        "tdfit_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "threads": int(threads),
        "master_seed": scenario.get("master_seed"),
        "scenario": scenario,
    }
    revision = git_revision()
    if revision is not None:
        meta["git"] = revision
    target = metadata_path(out)
    atomic_write_text(target, yaml.safe_dump(meta, sort_keys=False))
    return target
