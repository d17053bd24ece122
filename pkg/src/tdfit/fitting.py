"""Weighted subspace fitting of multiband delays by variable projection.

The shift structure of every band block of the signal basis U gives

    J_{i,1} U T = M'' Phi^{n_i},    J_{i,2} U T = M'' Phi^{n_i + 1}

for some nonsingular K x K matrix T, where J_{i,1} / J_{i,2} keep the first /
last P-1 rows of block i. Stacking these relations gives the block matrices
``script_u`` (data) and ``A(tau)`` (model), and the delays minimize

    min_{tau, C} || W^(1/2) (script_u - A(tau) C) ||_F^2

with W = diag(1/sigma_i^2) per band. For fixed tau the minimizing C is a
weighted least-squares solve, so only tau is iterated on (variable
projection). The residual is ``(I - P_{W^(1/2) A}) W^(1/2) script_u``.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .baselines import init_multiresolution, mimusic_baseline
from .errors import (
    ArgumentError,
    EstimationError,
    InitializerFailedError,
    SingularManifoldError,
)
from .frontend import ChannelEstimate
from .hankel import SignalBasis, estimate_list, signal_subspace
from .model import BandPlan, phase_powers, stacked_manifold

logger = logging.getLogger(__name__)

# |R_kk| / max|R_jj| below this means A(tau) has coinciding columns
MANIFOLD_RANK_TOL = 1e-12

# A cost below this fraction of ||W^(1/2) script_u||^2 is an exact fit
EXACT_FIT = 1e-24

# Smallest separation (in T_s) enforced between initial delays
MIN_INIT_SEPARATION = 1e-3

# Passes over all delays in the wrap search of the initial point
MAX_WRAP_PASSES = 4

# Relative cost drop needed to prefer the MI-MUSIC restart
RESTART_GAIN = 1e-6


@dataclass(frozen=True)
class SolverOptions:
    """Levenberg-Marquardt settings for :func:`varpro_solve`."""

    max_iterations: int = 50
    damping: float = 1e-3
    damping_factor: float = 10.0
    max_damping: float = 1e16
    cost_tol: float = 1e-12
    step_tol: float = 1e-12
    jacobian: str = "kaufman"

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ArgumentError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if not self.damping > 0 or not self.damping_factor > 1:
            raise ArgumentError("damping must be > 0 and damping_factor > 1")
        if self.jacobian not in ("kaufman", "exact"):
            raise ArgumentError(f"jacobian must be 'kaufman' or 'exact', got '{self.jacobian}'")

    @classmethod
    def from_config(cls, config) -> "SolverOptions":
        """Options from a :class:`tdfit.config.Config`."""
        return cls(
            max_iterations=int(config.get("max_iterations", 50)),
            damping=float(config.get("damping", 1e-3)),
            jacobian=str(config.get("jacobian", "kaufman")),
        )


@dataclass(frozen=True, eq=False)
class WsfProblem:
    """Data of the weighted subspace-fitting problem."""

    script_u: np.ndarray
    weights: np.ndarray
    plan: BandPlan
    p_rows: int
    k_paths: int

    @property
    def exponents(self) -> np.ndarray:
        """Row exponents of A(tau): n_i + [0..P-2] then n_i + 1 + [0..P-2] per band."""
        rows = np.arange(self.p_rows - 1)
        per_band = [
            np.concatenate([offset + rows, offset + 1 + rows]) for offset in self.plan.band_offsets
        ]
        return np.concatenate(per_band)

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def weighted_data(self) -> np.ndarray:
        return self.sqrt_weights[:, None] * self.script_u


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of the variable-projection fit."""

    delays: np.ndarray
    gains: np.ndarray
    cost: float
    iterations: int
    converged: bool
    linear_coeffs: np.ndarray


def _band_weights(noise_sigmas, n_bands: int, weighted: bool) -> np.ndarray:
    sigmas = np.asarray(noise_sigmas, dtype=float).ravel()
    if sigmas.size != n_bands:
        raise ArgumentError(f"{sigmas.size} noise sigmas given for {n_bands} bands")
    if not weighted or np.all(sigmas == 0):
        return np.ones(n_bands)
    if np.any(sigmas <= 0) or np.any(~np.isfinite(sigmas)):
        raise ArgumentError(f"weighting needs all noise sigmas positive, got {sigmas}")
    return 1.0 / sigmas**2


def build_blocks(
    u: SignalBasis, noise_sigmas: Sequence[float], weighted: bool = True
) -> WsfProblem:
    """Stack U_{i,1}, U_{i,2} of every band and the matching weights.

    All-zero sigmas (noiseless data) and ``weighted=False`` give unit weights.
    """
    if u.plan is None:
        raise ArgumentError("signal basis carries no band plan")
    p_rows, k_paths = u.p_rows, u.k_paths
    if p_rows - 1 < k_paths:
        raise ArgumentError(f"need P - 1 >= K, got P = {p_rows}, K = {k_paths}")
    blocks = []
    for band in range(u.l_bands):
        block = u.band_block(band)
        blocks.extend([block[:-1], block[1:]])
    band_weights = _band_weights(noise_sigmas, u.l_bands, weighted)
    return WsfProblem(
        script_u=np.concatenate(blocks, axis=0),
        weights=np.repeat(band_weights, 2 * (p_rows - 1)),
        plan=u.plan,
        p_rows=p_rows,
        k_paths=k_paths,
    )


@dataclass(frozen=True, eq=False)
class _Projection:
    """QR of W^(1/2) A(tau) and the quantities derived from it."""

    manifold: np.ndarray
    q: np.ndarray
    r: np.ndarray
    coeffs: np.ndarray
    residual: np.ndarray

    @property
    def cost(self) -> float:
        return float(np.vdot(self.residual, self.residual).real)


def _project(delays: np.ndarray, prob: WsfProblem, data: np.ndarray) -> _Projection:
    manifold = prob.sqrt_weights[:, None] * phase_powers(delays, prob.plan, prob.exponents)
    q, r = np.linalg.qr(manifold)
    diag = np.abs(np.diag(r))
    if diag.max() == 0 or diag.min() <= MANIFOLD_RANK_TOL * diag.max():
        raise SingularManifoldError(
            f"manifold is rank deficient at delays {np.array2string(delays, precision=6)} s"
        )
    qh_data = q.conj().T @ data
    coeffs = linalg.solve_triangular(r, qh_data)
    return _Projection(
        manifold=manifold, q=q, r=r, coeffs=coeffs, residual=data - q @ qh_data
    )


def wsf_cost(delays: Sequence[float], prob: WsfProblem):
    """Projected cost and residual at ``delays`` (seconds).

    Returns ``(cost, residual)``; the residual is flattened column-major, the
    same ordering as the rows of :func:`vp_jacobian`, and
    ``cost = ||residual||^2``.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    if delays.size != prob.k_paths:
        raise ArgumentError(f"expected {prob.k_paths} delays, got {delays.size}")
    proj = _project(delays, prob, prob.weighted_data())
    return proj.cost, proj.residual.ravel(order="F")


def linear_coeffs(delays: Sequence[float], prob: WsfProblem) -> np.ndarray:
    """Minimizing K x K matrix C of the weighted fit at ``delays``."""
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    return _project(delays, prob, prob.weighted_data()).coeffs


def _jacobian(proj: _Projection, prob: WsfProblem, exact: bool) -> np.ndarray:
    """Complex Jacobian of vec(residual) w.r.t. tau in seconds."""
    derivative = (-1j * prob.plan.subcarrier_spacing * prob.exponents)[:, None] * proj.manifold
    q, r = proj.q, proj.r
    k_paths = prob.k_paths
    columns = []
    for k in range(k_paths):
        # dA/dtau_k only has column k
        outer = np.outer(derivative[:, k], proj.coeffs[k])
        term = -(outer - q @ (q.conj().T @ outer))
        if exact:
            e_k = np.zeros((k_paths, proj.coeffs.shape[1]), dtype=complex)
            e_k[k] = derivative[:, k].conj() @ proj.residual
            term = term - q @ linalg.solve_triangular(r, e_k, trans="C")
        columns.append(term.ravel(order="F"))
    return np.stack(columns, axis=1)


def vp_jacobian(delays: Sequence[float], prob: WsfProblem, exact: bool = False) -> np.ndarray:
    """Jacobian of the flattened (column-major) residual with respect to tau.

    ``exact=False`` drops the second projector term (Kaufman); ``exact=True``
    gives the full Golub-Pereyra derivative.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    proj = _project(delays, prob, prob.weighted_data())
    return _jacobian(proj, prob, exact)


def _separate(delays: np.ndarray, plan: BandPlan) -> np.ndarray:
    """Sort and push apart initial delays closer than MIN_INIT_SEPARATION * T_s."""
    delays = np.sort(np.mod(delays, plan.unambiguous_range))
    gap = MIN_INIT_SEPARATION * plan.sample_period
    for k in range(1, delays.size):
        if delays[k] - delays[k - 1] < gap:
            delays[k] = delays[k - 1] + gap
    return np.mod(delays, plan.unambiguous_range)


def _start_cost(delays: np.ndarray, prob: WsfProblem) -> float:
    try:
        return wsf_cost(delays, prob)[0]
    except SingularManifoldError:
        return np.inf


def _best_wraps(delays: np.ndarray, prob: WsfProblem) -> np.ndarray:
    """Shift single delays by N*T_s / n_{L-1} while the fit cost drops.

    The fine stage of the multiresolution initializer is ambiguous modulo
    that period, so a wrong wrap is a whole number of periods away.
    """
    plan = prob.plan
    span = int(plan.band_offsets[-1])
    if span == 0:
        return delays
    period = plan.unambiguous_range / span
    best = np.array(delays, dtype=float)
    best_cost = _start_cost(best, prob)
    for _ in range(MAX_WRAP_PASSES):
        moved = False
        for k in range(best.size):
            for shift in (-period, period):
                candidate = best.copy()
                candidate[k] = np.mod(candidate[k] + shift, plan.unambiguous_range)
                cost = _start_cost(candidate, prob)
                if cost < best_cost:
                    best, best_cost, moved = candidate, cost, True
        if not moved:
            break
    if not np.array_equal(best, delays):
        logger.debug(
            "wrap search moved the start to %s T_s",
            np.array2string(best / plan.sample_period, precision=4),
        )
    return best


def varpro_solve(
    prob: WsfProblem,
    init_delays: Sequence[float],
    opts: Optional[SolverOptions] = None,
    estimates: Optional[Sequence[ChannelEstimate]] = None,
) -> FitResult:
    """Levenberg-Marquardt on the variable-projection residual.

    Delays are iterated in units of T_s and wrapped into [0, N*T_s), where the
    cost is periodic. Gains are recovered from ``estimates`` when given and are
    NaN otherwise.
    """
    opts = opts or SolverOptions()
    plan = prob.plan
    t_s = plan.sample_period
    n = plan.n_subcarriers
    init = np.atleast_1d(np.asarray(init_delays, dtype=float))
    if init.size != prob.k_paths:
        raise ArgumentError(f"expected {prob.k_paths} initial delays, got {init.size}")

    data = prob.weighted_data()
    exact = opts.jacobian == "exact"
    scale = float(np.vdot(data, data).real)

    x = np.mod(init / t_s, n)
    proj = _project(x * t_s, prob, data)
    cost = proj.cost
    damping = opts.damping
    converged = cost <= EXACT_FIT * scale
    iterations = 0

    while not converged and iterations < opts.max_iterations:
        iterations += 1
        jac = _jacobian(proj, prob, exact) * t_s
        jac_real = np.concatenate([jac.real, jac.imag], axis=0)
        res = proj.residual.ravel(order="F")
        res_real = np.concatenate([res.real, res.imag])
        normal = jac_real.T @ jac_real
        gradient = jac_real.T @ res_real
        scaling = np.maximum(np.diag(normal), np.finfo(float).eps * np.max(np.diag(normal)))

        accepted = False
        while damping <= opts.max_damping:
            try:
                step = np.linalg.solve(normal + damping * np.diag(scaling), -gradient)
            except np.linalg.LinAlgError:
                damping *= opts.damping_factor
                continue
            x_new = np.mod(x + step, n)
            try:
                proj_new = _project(x_new * t_s, prob, data)
            except SingularManifoldError:
                damping *= opts.damping_factor
                continue
            if proj_new.cost < cost:
                accepted = True
                break
            damping *= opts.damping_factor

        if not accepted:
            # No descent direction left at working precision
            logger.debug("LM stalled at cost %.3e after %d iterations", cost, iterations)
            converged = True
            break

        decrease = (cost - proj_new.cost) / cost
        step_norm = float(np.linalg.norm(step))
        x, proj, cost = x_new, proj_new, proj_new.cost
        damping = max(damping / opts.damping_factor, np.finfo(float).eps)
        logger.debug(
            "LM iteration %d: cost %.6e, step %.3e T_s, damping %.1e",
            iterations,
            cost,
            step_norm,
            damping,
        )
        if (
            decrease < opts.cost_tol
            or step_norm < opts.step_tol * np.linalg.norm(x)
            or cost <= EXACT_FIT * scale
        ):
            converged = True

    if not converged:
        logger.warning(
            "variable projection did not converge in %d iterations (cost %.3e)",
            opts.max_iterations,
            cost,
        )

    order = np.argsort(x)
    delays = x[order] * t_s
    if estimates is not None:
        gains = recover_gains(delays, estimates)
    else:
        gains = np.full(prob.k_paths, np.nan + 0j)
    return FitResult(
        delays=delays,
        gains=gains,
        cost=cost,
        iterations=iterations,
        converged=bool(converged),
        linear_coeffs=proj.coeffs[order],
    )


def recover_gains(
    delays: Sequence[float], estimates: Union[ChannelEstimate, Sequence[ChannelEstimate]]
) -> np.ndarray:
    """Least-squares gains on the full stacked model, averaged over snapshots.

    Bands are weighted by 1 / sigma_i when every sigma is positive.
    """
    estimates = estimate_list(estimates)
    plan = estimates[0].plan
    manifold = stacked_manifold(delays, plan, plan.n_subcarriers)
    mean = np.mean([e.stacked for e in estimates], axis=0)
    sigmas = estimates[0].sigmas
    if np.all(sigmas > 0):
        row_weights = np.repeat(1.0 / sigmas, plan.n_subcarriers)
    else:
        row_weights = np.ones(manifold.shape[0])
    gains, *_ = np.linalg.lstsq(row_weights[:, None] * manifold, row_weights * mean, rcond=None)
    return gains


def estimate_delays(
    estimates: Union[ChannelEstimate, Sequence[ChannelEstimate]],
    k_paths: int,
    q_cols: Optional[int] = None,
    weighted: bool = True,
    options: Optional[SolverOptions] = None,
    music_grid_factor: int = 10,
) -> FitResult:
    """Full pipeline: subspace, multiresolution init, variable projection, gains.

    The multiresolution start is moved by whole fine-stage wraps while that
    lowers the fit cost. The fit is then repeated from the MI-MUSIC peaks and
    the lower-cost solution is kept. MI-MUSIC alone seeds the fit when the
    multiresolution initializer fails.
    """
    estimates = estimate_list(estimates)
    plan = estimates[0].plan
    basis = signal_subspace(estimates, k_paths, q_cols)
    prob = build_blocks(basis, estimates[0].sigmas, weighted=weighted)
    grid_points = music_grid_factor * plan.n_subcarriers
    try:
        init = init_multiresolution(estimates, k_paths, q_cols)
    except InitializerFailedError as exc:
        logger.warning("multiresolution init failed (%s); using MI-MUSIC grid search", exc)
        init = mimusic_baseline(estimates, k_paths, grid_points, basis=basis)
        return varpro_solve(prob, _separate(np.asarray(init), plan), options, estimates)

    start = _best_wraps(_separate(np.asarray(init), plan), prob)
    fit = varpro_solve(prob, start, options, estimates)
    try:
        music = mimusic_baseline(estimates, k_paths, grid_points, basis=basis)
        alternative = varpro_solve(prob, _separate(music, plan), options, estimates)
    except EstimationError as exc:
        logger.debug("no MI-MUSIC restart: %s", exc)
        return fit
    if alternative.cost < (1.0 - RESTART_GAIN) * fit.cost:
        logger.debug(
            "MI-MUSIC restart lowered the cost from %.6e to %.6e", fit.cost, alternative.cost
        )
        return alternative
    return fit
