"""Subspace delay estimators used as initializers and comparison baselines.

All estimators take one :class:`ChannelEstimate` or a list of snapshots and
return K delays in seconds, sorted ascending.
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize, signal

from .errors import ArgumentError, InitializerFailedError, PeakDeficitError
from .frontend import ChannelEstimate
from .hankel import (
    SignalBasis,
    default_q_cols,
    estimate_list,
    fuse_snapshots,
    hankel_lift,
    leading_subspace,
    signal_subspace,
)
from .model import BandPlan, phase_powers

logger = logging.getLogger(__name__)

Estimates = Union[ChannelEstimate, Sequence[ChannelEstimate]]

# Eigenvector matrices worse than this cannot pair coarse and fine roots
MAX_PAIRING_COND = 1e12

# Grid points per chunk when evaluating the MUSIC spectrum
_SPECTRUM_CHUNK = 4096


def delays_from_roots(roots: np.ndarray, plan: BandPlan, exponent: int = 1) -> np.ndarray:
    """Delays whose phase factor raised to ``exponent`` equals each root.

    The result lies in [0, N*T_s / exponent).
    """
    period = plan.unambiguous_range / exponent
    tau = -np.angle(roots) / (plan.subcarrier_spacing * exponent)
    return np.mod(tau, period)


def _fused_stack(estimates, k_paths: int, q_cols: Optional[int]):
    plan = estimates[0].plan
    if q_cols is None:
        q_cols = default_q_cols(plan.n_subcarriers, k_paths)
    return fuse_snapshots([hankel_lift(e, q_cols, k_paths) for e in estimates])


def _shift_rotation(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Least-squares Psi with u1 @ Psi ~ u2."""
    psi, *_ = np.linalg.lstsq(u1, u2, rcond=None)
    return psi


def esprit_roots(
    est: Estimates,
    k_paths: int,
    bands: Optional[Sequence[int]] = None,
    q_cols: Optional[int] = None,
) -> np.ndarray:
    """Eigenvalues of the single-invariance ESPRIT rotation."""
    estimates = estimate_list(est)
    plan = estimates[0].plan
    if bands is None:
        bands = sorted({0, plan.n_bands - 1})
    bands = list(bands)
    if not bands:
        raise ArgumentError("bands must not be empty")
    for b in bands:
        if not 0 <= b < plan.n_bands:
            raise ArgumentError(f"band index {b} out of range [0, {plan.n_bands})")
    stack = _fused_stack(estimates, k_paths, q_cols)
    data = np.concatenate([stack.blocks[b] for b in bands], axis=1)
    u, _ = leading_subspace(data, k_paths, "ESPRIT Hankel")
    roots = np.linalg.eigvals(_shift_rotation(u[:-1], u[1:]))
    if not np.all(np.isfinite(roots)):
        raise InitializerFailedError("ESPRIT rotation has non-finite eigenvalues")
    return roots


def esprit_baseline(
    est: Estimates,
    k_paths: int,
    bands: Optional[Sequence[int]] = None,
    q_cols: Optional[int] = None,
) -> np.ndarray:
    """Standard least-squares ESPRIT on the Hankel blocks of ``bands``.

    Defaults to the first and the last band.
    """
    estimates = estimate_list(est)
    roots = esprit_roots(estimates, k_paths, bands, q_cols)
    return np.sort(delays_from_roots(roots, estimates[0].plan))


def init_multiresolution(
    est: Estimates, k_paths: int, q_cols: Optional[int] = None
) -> np.ndarray:
    """Coarse/fine ESPRIT initializer over bands 0 and L-1.

    The coarse stage uses the shift invariance inside band 0 and is unambiguous
    over [0, N*T_s). The fine stage uses the rotation between band 0 and band
    L-1, which is n_{L-1} times more sensitive but wraps every
    N*T_s / n_{L-1}; the wrap closest to the coarse estimate is kept. Both
    rotations are diagonalized by the same eigenvectors, which pairs them.
    """
    estimates = estimate_list(est)
    plan = estimates[0].plan
    if plan.n_bands == 1:
        logger.debug("single band: multiresolution init reduces to coarse ESPRIT")
        return esprit_baseline(estimates, k_paths, bands=[0], q_cols=q_cols)

    last = plan.n_bands - 1
    stack = _fused_stack(estimates, k_paths, q_cols)
    p_rows = stack.p_rows
    u, _ = leading_subspace(
        np.concatenate([stack.blocks[0], stack.blocks[last]], axis=0),
        k_paths,
        "two-band Hankel",
    )
    u_a, u_b = u[:p_rows], u[p_rows:]
    psi_coarse = _shift_rotation(u_a[:-1], u_a[1:])
    psi_fine = _shift_rotation(u_a, u_b)

    coarse_roots, vectors = np.linalg.eig(psi_coarse)
    cond = np.linalg.cond(vectors)
    if not np.isfinite(cond) or cond > MAX_PAIRING_COND:
        raise InitializerFailedError(
            f"cannot pair coarse and fine roots (eigenvector condition number {cond:.3e})"
        )
    fine_roots = np.diag(np.linalg.solve(vectors, psi_fine @ vectors))

    span = int(plan.band_offsets[last])
    period = plan.unambiguous_range / span
    coarse = delays_from_roots(coarse_roots, plan)
    fine = delays_from_roots(fine_roots, plan, exponent=span)
    wraps = np.rint((coarse - fine) / period)
    delays = np.mod(fine + wraps * period, plan.unambiguous_range)
    logger.debug(
        "multiresolution init: coarse %s, refined %s",
        np.array2string(coarse / plan.sample_period, precision=4),
        np.array2string(delays / plan.sample_period, precision=4),
    )
    return np.sort(delays)


def music_null_spectrum(
    grid: np.ndarray, basis: SignalBasis, plan: BandPlan
) -> np.ndarray:
    """1 - ||U^H a(tau)||^2 / ||a(tau)||^2 over a delay grid.

    ``a(tau)`` is the multiband steering vector with P rows per band. Zero at
    the true delays on noiseless data.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    exponents = (plan.band_offsets[:, None] + np.arange(basis.p_rows)[None, :]).ravel()
    norm2 = float(exponents.size)
    u_h = basis.basis.conj().T
    out = np.empty(grid.size)
    for start in range(0, grid.size, _SPECTRUM_CHUNK):
        chunk = grid[start : start + _SPECTRUM_CHUNK]
        steering = phase_powers(chunk, plan, exponents)
        captured = np.sum(np.abs(u_h @ steering) ** 2, axis=0) / norm2
        out[start : start + chunk.size] = 1.0 - captured
    return np.clip(out, 0.0, None)


def music_spectrum(grid: np.ndarray, basis: SignalBasis, plan: BandPlan) -> np.ndarray:
    """MUSIC pseudospectrum 1 / (1 - ||U^H a||^2 / ||a||^2)."""
    return 1.0 / np.maximum(music_null_spectrum(grid, basis, plan), np.finfo(float).eps)


def peak_distance(plan: BandPlan, grid_points: int) -> int:
    """Grid steps in one fringe of the multiband spectrum.

    The fringes repeat every N*T_s / n_{L-1}; on a single band the lobes are
    one T_s wide instead.
    """
    span = max(int(plan.band_offsets[-1]), plan.n_subcarriers)
    return max(1, grid_points // span)


def mimusic_baseline(
    est: Estimates,
    k_paths: int,
    grid_points: int,
    q_cols: Optional[int] = None,
    basis: Optional[SignalBasis] = None,
) -> np.ndarray:
    """Multiband MUSIC search over [0, N*T_s) with local refinement.

    The K highest peaks above the median spectrum level, at least one fringe
    apart, are refined by a bounded scalar search within one grid step.
    """
    estimates = estimate_list(est)
    plan = estimates[0].plan
    n = plan.n_subcarriers
    if grid_points < 10 * n:
        raise ArgumentError(f"grid_points must be >= 10 * N = {10 * n}, got {grid_points}")
    if basis is None:
        basis = signal_subspace(estimates, k_paths, q_cols)

    step = plan.unambiguous_range / grid_points
    grid = np.arange(grid_points) * step
    spectrum = music_spectrum(grid, basis, plan)

    # Pad one sample each side so peaks at the circular seam are found
    padded = np.concatenate([spectrum[-1:], spectrum, spectrum[:1]])
    peaks, props = signal.find_peaks(
        padded, height=np.median(spectrum), distance=peak_distance(plan, grid_points)
    )
    peaks = peaks - 1
    keep = (peaks >= 0) & (peaks < grid_points)
    peaks, heights = peaks[keep], props["peak_heights"][keep]
    if peaks.size < k_paths:
        raise PeakDeficitError(
            f"MUSIC spectrum has {peaks.size} peaks above the median, need K = {k_paths}"
        )
    top = peaks[np.argsort(heights)[::-1][:k_paths]]

    def null_at(tau: float) -> float:
        return float(music_null_spectrum(np.array([tau]), basis, plan)[0])

    delays = []
    for index in top:
        centre = grid[index]
        res = optimize.minimize_scalar(
            null_at,
            bounds=(centre - step, centre + step),
            method="bounded",
            options={"xatol": 1e-9 * plan.sample_period},
        )
        delays.append(res.x if res.fun <= null_at(centre) else centre)
    return np.sort(np.mod(np.asarray(delays), plan.unambiguous_range))
