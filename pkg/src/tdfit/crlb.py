"""Deterministic Cramer-Rao bound on multiband delay estimates.

Parameters are eta = [tau; Re alpha; Im alpha] with the gains treated as
unknown deterministic nuisance. For S snapshots of ``h = A(tau) alpha + q``
with per-band noise variance sigma_i^2 the Fisher information is

    F = 2 S Re{D^H Sigma^-1 D},    D = d(A(tau) alpha) / d eta.

The matrix is assembled with delays in units of T_s, where its entries are of
comparable size, and converted back to seconds afterwards.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, SingularInformationError
from .frontend import ProbeConfig, sigma_from_snr
from .model import BandPlan, MultipathChannel, check_delays, manifold_exponents, phase_powers

logger = logging.getLogger(__name__)

MAX_FISHER_COND = 1e12


@dataclass(frozen=True, eq=False)
class CrlbResult:
    """Delay variances (s^2) and the Fisher information in SI units."""

    tau_variances: np.ndarray
    fisher: np.ndarray
    snapshots: int

    @property
    def los_rmse(self) -> float:
        """Bound on the RMSE of the smallest delay (seconds)."""
        return float(np.sqrt(self.tau_variances[0]))


def mean_vector(delays: Sequence[float], gains: Sequence[complex], plan: BandPlan) -> np.ndarray:
    """Noiseless stacked samples mu = A(tau) alpha."""
    delays = np.asarray(delays, dtype=float)
    return phase_powers(delays, plan, manifold_exponents(plan, plan.n_subcarriers)) @ np.asarray(
        gains, dtype=complex
    )


def mean_jacobian(
    delays: Sequence[float], gains: Sequence[complex], plan: BandPlan
) -> np.ndarray:
    """d mu / d [tau; Re alpha; Im alpha], delays in seconds (LN x 3K)."""
    delays = np.asarray(delays, dtype=float)
    gains = np.asarray(gains, dtype=complex)
    exponents = manifold_exponents(plan, plan.n_subcarriers)
    manifold = phase_powers(delays, plan, exponents)
    d_tau = (-1j * plan.subcarrier_spacing * exponents)[:, None] * manifold * gains[None, :]
    return np.concatenate([d_tau, manifold, 1j * manifold], axis=1)


def crlb_delays(
    ch: MultipathChannel, plan: BandPlan, sigmas: Sequence[float], snapshots: int
) -> CrlbResult:
    """Deterministic CRLB of the K delays."""
    sigmas = np.asarray(sigmas, dtype=float).ravel()
    if sigmas.size != plan.n_bands:
        raise ArgumentError(f"{sigmas.size} sigmas given for {plan.n_bands} bands")
    if np.any(~(sigmas > 0)) or np.any(~np.isfinite(sigmas)):
        raise ArgumentError(f"sigmas must be positive and finite, got {sigmas}")
    if int(snapshots) != snapshots or snapshots < 1:
        raise ArgumentError(f"snapshots must be a positive integer, got {snapshots}")
    check_delays(ch.delays, plan)

    k_paths = ch.k_paths
    t_s = plan.sample_period
    units = np.concatenate([np.full(k_paths, t_s), np.ones(2 * k_paths)])
    jac = mean_jacobian(ch.delays, ch.gains, plan) * units[None, :]
    inv_var = np.repeat(1.0 / sigmas**2, plan.n_subcarriers)
    fisher_scaled = 2.0 * snapshots * np.real(jac.conj().T @ (inv_var[:, None] * jac))
    fisher_scaled = 0.5 * (fisher_scaled + fisher_scaled.T)

    try:
        cond = np.linalg.cond(fisher_scaled)
        inverse = np.linalg.inv(fisher_scaled)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError(f"Fisher information is singular: {exc}") from exc
    if not np.isfinite(cond) or cond > MAX_FISHER_COND:
        raise SingularInformationError(
            f"Fisher information is singular (condition number {cond:.3e})"
        )

    tau_variances = np.diag(inverse)[:k_paths] * t_s**2
    fisher = fisher_scaled / np.outer(units, units)
    return CrlbResult(tau_variances=tau_variances, fisher=fisher, snapshots=int(snapshots))


def crlb_curve(
    ch: MultipathChannel,
    plan: BandPlan,
    snr_axis_db: Sequence[float],
    offsets_db: Optional[Sequence[float]],
    snapshots: int,
    probe: Optional[ProbeConfig] = None,
) -> np.ndarray:
    """Bound on the LOS delay RMSE (seconds) at every SNR of the axis.

    Band i is set to SNR ``snr + offsets_db[i]``.
    """
    offsets = np.zeros(plan.n_bands) if offsets_db is None else np.asarray(offsets_db, float)
    if offsets.size != plan.n_bands:
        raise ArgumentError(f"{offsets.size} SNR offsets given for {plan.n_bands} bands")
    curve = []
    for snr in np.atleast_1d(np.asarray(snr_axis_db, dtype=float)):
        noise = sigma_from_snr(ch, plan, probe, snr + offsets)
        curve.append(crlb_delays(ch, plan, noise.sigmas, snapshots).los_rmse)
    logger.debug("CRLB curve over %d SNR points", len(curve))
    return np.asarray(curve)
