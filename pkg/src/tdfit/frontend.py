"""Multibranch OFDM receiver simulation.

Each of the L receiver branches observes ``y_i = diag(s * g_i) h_i + q_i`` on N
subcarriers, where ``s`` are the pilots and ``g_i`` the (calibrated) RF-chain
response. Deconvolution returns ``h_i`` plus white noise of variance sigma_i^2.

Noise is drawn directly after deconvolution, i.e. ``q_i = diag(s * g_i) q'_i``
with ``q'_i ~ CN(0, sigma_i^2 I)``, so the simulated data matches the model the
estimators are derived for.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import ArgumentError, IllConditionedProbeError
from .model import BandPlan, MultipathChannel, channel_samples
from .utils import complex_to_pairs, db_to_linear, pairs_to_complex

logger = logging.getLogger(__name__)

# Smallest usable |s_n g_i[n]|
MIN_DIVISOR = 1e-6

Seed = Union[int, np.random.SeedSequence]


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    # Fold negative or oversized seeds into the unsigned 64-bit range
    return np.random.default_rng(int(seed) % (1 << 64))


def zadoff_chu(n: int, root: int = 1) -> np.ndarray:
    """Constant-amplitude Zadoff-Chu sequence of even length ``n``."""
    k = np.arange(n)
    if n % 2:
        return np.exp(-1j * np.pi * root * k * (k + 1) / n)
    return np.exp(-1j * np.pi * root * k * k / n)


@dataclass(frozen=True, eq=False)
class ProbeConfig:
    """Known pilots ``s`` (length N), RF responses ``g_i`` (L x N) and CP length."""

    pilots: np.ndarray
    rf_responses: np.ndarray
    cp_duration: float

    def __post_init__(self):
        pilots = np.array(self.pilots, dtype=complex).ravel()
        rf = np.atleast_2d(np.array(self.rf_responses, dtype=complex))
        pilots.setflags(write=False)
        rf.setflags(write=False)
        object.__setattr__(self, "pilots", pilots)
        object.__setattr__(self, "rf_responses", rf)

        magnitude = np.abs(pilots)
        if pilots.size == 0 or magnitude[0] <= 0:
            raise ArgumentError("pilots must have positive magnitude")
        if not np.allclose(magnitude, magnitude[0], rtol=1e-9, atol=0.0):
            raise ArgumentError("pilots must have constant magnitude")
        if rf.shape[1] != pilots.size:
            raise ArgumentError(
                f"rf_responses have {rf.shape[1]} subcarriers, pilots have {pilots.size}"
            )
        small = np.abs(rf) < MIN_DIVISOR
        if np.any(small):
            band, sub = np.argwhere(small)[0]
            raise IllConditionedProbeError(
                f"rf_responses[{band}][{sub}] has magnitude {abs(rf[band, sub]):.3e} "
                f"< {MIN_DIVISOR:g}"
            )
        if self.cp_duration < 0:
            raise ArgumentError(f"cp_duration must be non-negative, got {self.cp_duration}")

    @classmethod
    def default(
        cls, plan: BandPlan, pilots: str = "zadoff-chu", cp_fraction: float = 0.25
    ) -> "ProbeConfig":
        """Flat RF chains and unit-magnitude pilots."""
        n = plan.n_subcarriers
        if pilots == "zadoff-chu":
            s = zadoff_chu(n)
        elif pilots == "ones":
            s = np.ones(n, dtype=complex)
        else:
            raise ArgumentError(f"unknown pilot sequence '{pilots}' (zadoff-chu or ones)")
        return cls(
            pilots=s,
            rf_responses=np.ones((plan.n_bands, n), dtype=complex),
            cp_duration=cp_fraction * plan.unambiguous_range,
        )

    def check_plan(self, plan: BandPlan) -> None:
        """Check dimensions and CP length against a band plan."""
        if self.pilots.size != plan.n_subcarriers:
            raise ArgumentError(
                f"probe has {self.pilots.size} pilots, plan has N = {plan.n_subcarriers}"
            )
        if self.rf_responses.shape[0] != plan.n_bands:
            raise ArgumentError(
                f"probe has {self.rf_responses.shape[0]} RF responses, plan has "
                f"L = {plan.n_bands} bands"
            )
        if self.cp_duration > plan.unambiguous_range:
            raise ArgumentError(
                f"cp_duration {self.cp_duration:.3e} s exceeds N*T_s = "
                f"{plan.unambiguous_range:.3e} s"
            )

    def divisors(self) -> np.ndarray:
        """L x N matrix of s_n g_i[n]."""
        return self.pilots[None, :] * self.rf_responses


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-branch noise standard deviation after deconvolution."""

    sigmas: np.ndarray

    def __post_init__(self):
        sigmas = np.array(self.sigmas, dtype=float).ravel()
        if np.any(~np.isfinite(sigmas)) or np.any(sigmas < 0):
            raise ArgumentError(f"noise sigmas must be finite and non-negative, got {sigmas}")
        sigmas.setflags(write=False)
        object.__setattr__(self, "sigmas", sigmas)

    @classmethod
    def noiseless(cls, plan: BandPlan) -> "NoiseModel":
        return cls(np.zeros(plan.n_bands))


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    """Deconvolved per-band channel samples of one snapshot."""

    per_band: np.ndarray
    sigmas: np.ndarray
    plan: BandPlan

    def __post_init__(self):
        per_band = np.atleast_2d(np.array(self.per_band, dtype=complex))
        sigmas = np.array(self.sigmas, dtype=float).ravel()
        per_band.setflags(write=False)
        sigmas.setflags(write=False)
        object.__setattr__(self, "per_band", per_band)
        object.__setattr__(self, "sigmas", sigmas)
        expected = (self.plan.n_bands, self.plan.n_subcarriers)
        if per_band.shape != expected:
            raise ArgumentError(f"per_band has shape {per_band.shape}, expected {expected}")
        if sigmas.size != self.plan.n_bands:
            raise ArgumentError(f"{sigmas.size} sigmas given for {self.plan.n_bands} bands")

    @property
    def n_bands(self) -> int:
        return self.plan.n_bands

    @property
    def stacked(self) -> np.ndarray:
        """Multiband vector h = [h_0; ...; h_{L-1}]."""
        return self.per_band.ravel()

    def to_dict(self) -> Dict:
        return {
            "sigmas": [float(s) for s in self.sigmas],
            "per_band": complex_to_pairs(self.per_band),
        }

    @classmethod
    def from_dict(cls, data: Dict, plan: BandPlan) -> "ChannelEstimate":
        return cls(
            per_band=pairs_to_complex(data["per_band"]),
            sigmas=np.asarray(data["sigmas"], dtype=float),
            plan=plan,
        )


def _check_inputs(plan: BandPlan, probe: ProbeConfig, noise: NoiseModel) -> None:
    probe.check_plan(plan)
    if noise.sigmas.size != plan.n_bands:
        raise ArgumentError(f"{noise.sigmas.size} noise sigmas given for {plan.n_bands} bands")


def synthesize_received(
    ch: MultipathChannel,
    plan: BandPlan,
    probe: ProbeConfig,
    noise: NoiseModel,
    rng_seed: Seed,
) -> np.ndarray:
    """Received frequency-domain data y_i of all L branches (L x N).

    Deterministic for a fixed seed.
    """
    _check_inputs(plan, probe, noise)
    if ch.delays.max() > probe.cp_duration:
        logger.warning(
            "largest delay %.3e s exceeds the cyclic prefix %.3e s",
            ch.delays.max(),
            probe.cp_duration,
        )
    h = np.stack([channel_samples(ch, plan, i) for i in range(plan.n_bands)])
    rng = _rng(rng_seed)
    shape = (plan.n_bands, plan.n_subcarriers)
    white = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    q_deconvolved = noise.sigmas[:, None] * white
    return probe.divisors() * (h + q_deconvolved)


def deconvolve(
    y: np.ndarray, probe: ProbeConfig, noise: NoiseModel, plan: BandPlan
) -> ChannelEstimate:
    """Channel estimates h_i = diag(s * g_i)^-1 y_i."""
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    _check_inputs(plan, probe, noise)
    divisors = probe.divisors()
    if y.shape != divisors.shape:
        raise ArgumentError(f"received data has shape {y.shape}, expected {divisors.shape}")
    small = np.abs(divisors) < MIN_DIVISOR
    if np.any(small):
        band, sub = np.argwhere(small)[0]
        raise IllConditionedProbeError(
            f"|s[{sub}] g_{band}[{sub}]| = {abs(divisors[band, sub]):.3e} < {MIN_DIVISOR:g}"
        )
    return ChannelEstimate(per_band=y / divisors, sigmas=noise.sigmas, plan=plan)


def band_powers(ch: MultipathChannel, plan: BandPlan) -> np.ndarray:
    """Mean per-subcarrier power (1/N) ||h_i||^2 of every band."""
    return np.array(
        [np.mean(np.abs(channel_samples(ch, plan, i)) ** 2) for i in range(plan.n_bands)]
    )


def sigma_from_snr(
    ch: MultipathChannel,
    plan: BandPlan,
    probe: Optional[ProbeConfig],
    snr_db: Union[float, Sequence[float]],
) -> NoiseModel:
    """Noise levels giving the requested per-band SNR after deconvolution.

    ``sigma_i^2 = P_i / 10^(snr_i / 10)`` with ``P_i`` the mean noiseless power
    of band i. A scalar SNR applies to every band; +inf gives noiseless data.
    """
    if probe is not None:
        probe.check_plan(plan)
    snr = np.broadcast_to(np.asarray(snr_db, dtype=float), (plan.n_bands,))
    if np.any(np.isnan(snr)) or np.any(snr == -np.inf):
        raise ArgumentError(f"snr_db must be a number or +inf, got {snr}")
    variances = band_powers(ch, plan) / db_to_linear(snr)
    return NoiseModel(np.sqrt(variances))


def simulate_snapshots(
    ch: MultipathChannel,
    plan: BandPlan,
    probe: ProbeConfig,
    noise: NoiseModel,
    seed: Seed,
    snapshots: int = 1,
) -> List[ChannelEstimate]:
    """Synthesize and deconvolve ``snapshots`` independent-noise observations."""
    if snapshots < 1:
        raise ArgumentError(f"snapshots must be >= 1, got {snapshots}")
    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(int(seed) % (1 << 64))
    estimates = []
    for child in root.spawn(snapshots):
        y = synthesize_received(ch, plan, probe, noise, child)
        estimates.append(deconvolve(y, probe, noise, plan))
    return estimates
