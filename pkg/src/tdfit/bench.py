"""Seeded Monte-Carlo benchmark of the delay estimators.

Every trial draws its randomness from ``SeedSequence([master_seed, axis, trial])``
so results do not depend on how trials are scheduled across threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .baselines import esprit_baseline, init_multiresolution, mimusic_baseline
from .crlb import crlb_curve, crlb_delays
from .errors import EstimationError
from .fitting import SolverOptions, estimate_delays
from .frontend import ChannelEstimate, NoiseModel, sigma_from_snr, simulate_snapshots
from .model import MultipathChannel
from .scenario import Scenario, draw_gains
from .utils import circular_distance

logger = logging.getLogger(__name__)

CSV_HEADER = ("axis", "axis_value", "estimator", "rmse_s", "crlb_s", "trials", "failures")

Progress = Callable[[int], None]


@dataclass(frozen=True)
class BenchRow:
    """One (axis point, estimator) cell of a benchmark."""

    axis: str
    axis_value: float
    estimator: str
    rmse_s: float
    crlb_s: float
    trials: int
    failures: int

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class BenchResult:
    """Benchmark rows in axis order, estimators in scenario order."""

    rows: List[BenchRow] = field(default_factory=list)

    def estimators(self) -> List[str]:
        seen: List[str] = []
        for row in self.rows:
            if row.estimator not in seen:
                seen.append(row.estimator)
        return seen

    def series(self) -> Dict[str, List[BenchRow]]:
        """Rows grouped per estimator."""
        return {name: [r for r in self.rows if r.estimator == name] for name in self.estimators()}

    def crlb_series(self) -> List[Tuple[float, float]]:
        """(axis_value, crlb_s) once per axis point."""
        points: Dict[float, float] = {}
        for row in self.rows:
            points.setdefault(row.axis_value, row.crlb_s)
        return list(points.items())


@dataclass(frozen=True)
class TrialOutcome:
    """Squared LOS errors (None on failure) and the trial's CRLB variance."""

    squared_errors: Dict[str, Optional[float]]
    crlb_variance: float


def trial_seed(master_seed: int, axis_index: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed) % (1 << 64), axis_index, trial])


def los_error(estimated: np.ndarray, true: np.ndarray, period: float) -> float:
    """Absolute error of the estimate matched to the smallest true delay.

    Estimates are matched to true delays by minimum total circular distance.
    """
    estimated = np.atleast_1d(np.asarray(estimated, dtype=float))
    true = np.atleast_1d(np.asarray(true, dtype=float))
    cost = circular_distance(estimated[:, None], true[None, :], period)
    rows, cols = linear_sum_assignment(cost)
    los = int(np.argmin(true))
    matched = rows[cols == los]
    if matched.size == 0:
        return float(np.min(cost[:, los]))
    return float(cost[matched[0], los])


def trial_channel(
    scn: Scenario, axis_index: int, trial: int
) -> Tuple[MultipathChannel, np.random.SeedSequence]:
    """Channel of one trial and the seed left for its noise."""
    gains_seed, noise_seed = trial_seed(scn.master_seed, axis_index, trial).spawn(2)
    if scn.fixed_gains:
        gains_seed = np.random.SeedSequence(int(scn.master_seed) % (1 << 64))
    gains = draw_gains(scn.k_paths, scn.rician_k_db, np.random.default_rng(gains_seed))
    return scn.channel(gains), noise_seed


def _trial_noise(scn: Scenario, ch: MultipathChannel, axis_index: int) -> NoiseModel:
    return sigma_from_snr(ch, scn.plan, None, scn.snr_at(axis_index) + scn.offsets_db)


def _bound_variance(ch: MultipathChannel, scn: Scenario, noise: NoiseModel, snapshots: int):
    if not np.all(noise.sigmas > 0):
        return float("nan")
    try:
        return float(crlb_delays(ch, scn.plan, noise.sigmas, snapshots).tau_variances[0])
    except EstimationError as exc:
        logger.debug("no CRLB for this channel: %s", exc)
        return float("nan")


def run_estimator(
    name: str,
    estimates: List[ChannelEstimate],
    scn: Scenario,
    options: Optional[SolverOptions] = None,
) -> np.ndarray:
    """Delays from the named estimator."""
    k_paths = scn.k_paths
    if name in ("proposed", "proposed_unweighted"):
        fit = estimate_delays(
            estimates,
            k_paths,
            q_cols=scn.q_cols,
            weighted=name == "proposed",
            options=options,
            music_grid_factor=scn.music_grid_factor,
        )
        return fit.delays
    if name == "esprit":
        last = scn.plan.n_bands - 1
        return esprit_baseline(estimates, k_paths, bands=sorted({0, last}), q_cols=scn.q_cols)
    if name == "mresprit":
        return init_multiresolution(estimates, k_paths, q_cols=scn.q_cols)
    if name == "mimusic":
        grid = scn.music_grid_factor * scn.plan.n_subcarriers
        return mimusic_baseline(estimates, k_paths, grid, q_cols=scn.q_cols)
    raise ValueError(f"unknown estimator '{name}'")


def run_trial(
    scn: Scenario, axis_index: int, trial: int, options: Optional[SolverOptions] = None
) -> TrialOutcome:
    """One Monte-Carlo trial of every listed estimator."""
    ch, noise_seed = trial_channel(scn, axis_index, trial)
    snapshots = scn.snapshots_at(axis_index)
    noise = _trial_noise(scn, ch, axis_index)
    estimates = simulate_snapshots(ch, scn.plan, scn.probe(), noise, noise_seed, snapshots)
    period = scn.plan.unambiguous_range
    errors: Dict[str, Optional[float]] = {}
    for name in scn.estimators:
        try:
            delays = run_estimator(name, estimates, scn, options)
        except EstimationError as exc:
            logger.debug("axis %d trial %d: %s failed: %s", axis_index, trial, name, exc)
            errors[name] = None
            continue
        errors[name] = los_error(delays, scn.delays, period) ** 2
    return TrialOutcome(
        squared_errors=errors, crlb_variance=_bound_variance(ch, scn, noise, snapshots)
    )


def _fan_out(
    work: Callable[[int, int], object], scn: Scenario, threads: int, progress: Optional[Progress]
) -> Dict[Tuple[int, int], object]:
    keys = [(a, t) for a in range(len(scn.axis_values)) for t in range(scn.trials)]
    results: Dict[Tuple[int, int], object] = {}
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = {pool.submit(work, a, t): (a, t) for a, t in keys}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
            if progress is not None:
                progress(1)
    return results


def _root_mean(values: List[float]) -> float:
    finite = [v for v in values if np.isfinite(v)]
    if not finite:
        return float("nan")
    return float(np.sqrt(np.mean(finite)))


def run_bench(
    scn: Scenario,
    threads: int = 1,
    options: Optional[SolverOptions] = None,
    progress: Optional[Progress] = None,
) -> BenchResult:
    """Run every trial of every axis point and reduce to RMSE rows."""
    outcomes = _fan_out(lambda a, t: run_trial(scn, a, t, options), scn, threads, progress)
    rows = []
    for a, value in enumerate(scn.axis_values):
        cell = [outcomes[(a, t)] for t in range(scn.trials)]
        crlb_s = _root_mean([o.crlb_variance for o in cell])
        for name in scn.estimators:
            errors = [o.squared_errors[name] for o in cell]
            used = [e for e in errors if e is not None]
            failures = len(errors) - len(used)
            rmse = float(np.sqrt(np.mean(used))) if used else float("nan")
            rows.append(
                BenchRow(scn.axis, float(value), name, rmse, crlb_s, len(used), failures)
            )
        logger.info("%s = %g done", scn.axis, value)
    return BenchResult(rows)


def _shared_channel_column(scn: Scenario, progress: Optional[Progress]) -> BenchResult:
    """CRLB column of an SNR sweep whose trials all share one channel."""
    ch, _ = trial_channel(scn, 0, 0)
    snapshots = scn.snapshots_at(0)
    finite = [a for a, snr in enumerate(scn.snr_db) if np.isfinite(snr)]
    bounds = np.full(len(scn.axis_values), np.nan)
    try:
        curve = crlb_curve(
            ch, scn.plan, [scn.snr_db[a] for a in finite], scn.offsets_db, snapshots
        )
        bounds[finite] = curve
    except EstimationError as exc:
        logger.debug("no CRLB for the shared channel: %s", exc)
    rows = []
    for a, value in enumerate(scn.axis_values):
        ok = bool(np.isfinite(bounds[a]))
        rows.append(
            BenchRow(
                scn.axis,
                float(value),
                "crlb",
                float(bounds[a]),
                float(bounds[a]),
                scn.trials if ok else 0,
                0 if ok else scn.trials,
            )
        )
        if progress is not None:
            progress(scn.trials)
    return BenchResult(rows)


def crlb_column(
    scn: Scenario, threads: int = 1, progress: Optional[Progress] = None
) -> BenchResult:
    """The CRLB column of :func:`run_bench` alone, as rows named ``crlb``.

    Trials whose bound does not exist are counted as failures. An SNR sweep
    with ``fixed_gains`` has one channel, so its column is a single CRLB curve.
    """
    if scn.fixed_gains and scn.axis == "snr":
        return _shared_channel_column(scn, progress)

    def bound(a: int, t: int) -> float:
        ch, _ = trial_channel(scn, a, t)
        return _bound_variance(ch, scn, _trial_noise(scn, ch, a), scn.snapshots_at(a))

    variances = _fan_out(bound, scn, threads, progress)
    rows = []
    for a, value in enumerate(scn.axis_values):
        cell = [variances[(a, t)] for t in range(scn.trials)]
        used = [v for v in cell if np.isfinite(v)]
        crlb_s = _root_mean(used)
        rows.append(
            BenchRow(
                scn.axis, float(value), "crlb", crlb_s, crlb_s, len(used), len(cell) - len(used)
            )
        )
    return BenchResult(rows)
