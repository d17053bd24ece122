"""Parametric multipath channel and its structure matrices.

A channel with K paths has frequency response ``H(w) = sum_k a_k exp(-j w tau_k)``.
Sampling it on L bands of N subcarriers, band i starting ``n_i`` subcarriers above
the lowest probed frequency, gives per-band vectors

    H_i[n] = sum_k a_k Phi_k^(n_i + n),    Phi_k = exp(-j w_sc tau_k),

for n = 0..N-1. The constant phase ``exp(-j w_0 tau_k)`` and the offset of the
DFT index origin are absorbed into the gains, so recovered gains are expressed
in that convention while delays are unaffected.
"""

from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from .errors import ArgumentError, DelayRangeError


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BandPlan:
    """Band grid: L bands of width B, each with N subcarriers.

    ``band_offsets[i]`` is the subcarrier index of band i relative to band 0, so
    band centers sit at ``f0 + n_i * B / N``.
    """

    f0: float
    bandwidth: float
    n_subcarriers: int
    band_offsets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "band_offsets", _frozen_array(self.band_offsets, np.int64))
        n = self.n_subcarriers
        if int(n) != n or n < 2 or n % 2:
            raise ArgumentError(f"n_subcarriers must be a positive even integer, got {n}")
        object.__setattr__(self, "n_subcarriers", int(n))
        if not self.bandwidth > 0:
            raise ArgumentError(f"bandwidth must be positive, got {self.bandwidth}")
        offsets = self.band_offsets
        if offsets.ndim != 1 or offsets.size < 1:
            raise ArgumentError("band_offsets must be a non-empty vector")
        if offsets[0] != 0:
            raise ArgumentError(f"band_offsets[0] must be 0, got {offsets[0]}")
        gaps = np.diff(offsets)
        if np.any(gaps < self.n_subcarriers):
            bad = int(np.argmax(gaps < self.n_subcarriers)) + 1
            raise ArgumentError(
                f"bands overlap: band_offsets[{bad}] - band_offsets[{bad - 1}] = "
                f"{gaps[bad - 1]} < N = {self.n_subcarriers}"
            )

    @classmethod
    def from_centers(
        cls, centers_hz: Sequence[float], bandwidth: float, n_subcarriers: int
    ) -> "BandPlan":
        """Build a plan from band center frequencies (Hz).

        The lowest center becomes ``f0``; every other center must lie on the
        subcarrier grid ``f0 + n * B / N``.
        """
        centers = np.sort(np.asarray(centers_hz, dtype=float))
        if centers.size < 1:
            raise ArgumentError("at least one band center is required")
        spacing = bandwidth / n_subcarriers
        raw = (centers - centers[0]) / spacing
        offsets = np.rint(raw)
        off_grid = np.abs(raw - offsets) > 1e-6
        if np.any(off_grid):
            bad = int(np.argmax(off_grid))
            raise ArgumentError(
                f"band center {centers[bad]:.6e} Hz is not on the subcarrier grid "
                f"(offset {raw[bad]:.6f} subcarriers from {centers[0]:.6e} Hz)"
            )
        return cls(
            f0=float(centers[0]),
            bandwidth=float(bandwidth),
            n_subcarriers=n_subcarriers,
            band_offsets=offsets.astype(np.int64),
        )

    @property
    def n_bands(self) -> int:
        return int(self.band_offsets.size)

    @property
    def sample_period(self) -> float:
        """T_s = 1 / B in seconds."""
        return 1.0 / self.bandwidth

    @property
    def subcarrier_spacing(self) -> float:
        """w_sc = 2 pi / (N T_s) in rad/s."""
        return 2.0 * np.pi / (self.n_subcarriers * self.sample_period)

    @property
    def unambiguous_range(self) -> float:
        """N T_s, the period of Phi_k in tau."""
        return self.n_subcarriers * self.sample_period

    @property
    def band_centers_hz(self) -> np.ndarray:
        return self.f0 + self.band_offsets * (self.bandwidth / self.n_subcarriers)

    def to_dict(self) -> Dict:
        return {
            "f0": float(self.f0),
            "bandwidth": float(self.bandwidth),
            "n_subcarriers": self.n_subcarriers,
            "band_offsets": [int(n) for n in self.band_offsets],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "BandPlan":
        return cls(
            f0=float(data["f0"]),
            bandwidth=float(data["bandwidth"]),
            n_subcarriers=int(data["n_subcarriers"]),
            band_offsets=np.asarray(data["band_offsets"], dtype=np.int64),
        )


@dataclass(frozen=True, eq=False)
class MultipathChannel:
    """K complex gains and K delays (seconds), delays in ascending order.

    Coinciding delays are representable; estimators and the CRLB report their
    own failures on such channels.
    """

    gains: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gains", _frozen_array(self.gains, complex).ravel())
        object.__setattr__(self, "delays", _frozen_array(self.delays, float).ravel())
        if self.delays.size < 1:
            raise ArgumentError("a channel needs at least one path")
        if self.gains.size != self.delays.size:
            raise ArgumentError(
                f"gains has {self.gains.size} entries but delays has {self.delays.size}"
            )
        if np.any(np.diff(self.delays) < 0):
            raise ArgumentError("delays must be sorted in ascending order")
        if np.any(self.gains == 0):
            raise ArgumentError(f"gain[{int(np.argmax(self.gains == 0))}] is zero")

    @property
    def k_paths(self) -> int:
        return int(self.delays.size)

    def check_range(self, plan: BandPlan) -> None:
        """Raise DelayRangeError if any delay is outside [0, N T_s)."""
        check_delays(self.delays, plan)

    def to_dict(self) -> Dict:
        return {
            "delays": [float(t) for t in self.delays],
            "gains": [[float(g.real), float(g.imag)] for g in self.gains],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MultipathChannel":
        gains = np.asarray(data["gains"], dtype=float)
        return cls(gains=gains[:, 0] + 1j * gains[:, 1], delays=np.asarray(data["delays"]))


@dataclass(frozen=True, eq=False)
class SteeringSet:
    """Per-path phase factors Phi_k and band rotations theta_{i,k} = Phi_k^{n_i}."""

    phis: np.ndarray
    thetas: np.ndarray


def check_delays(delays: np.ndarray, plan: BandPlan) -> np.ndarray:
    """Validate delays against the unambiguous range and return them as floats."""
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    tau_max = plan.unambiguous_range
    outside = ~((delays >= 0) & (delays < tau_max))
    if np.any(outside):
        index = int(np.argmax(outside))
        raise DelayRangeError(index, float(delays[index]), tau_max)
    return delays


def phase_powers(delays: np.ndarray, plan: BandPlan, exponents: np.ndarray) -> np.ndarray:
    """Matrix with entries Phi_k^e for every exponent e (rows) and delay (columns).

    Evaluated from the phase directly, which keeps unit modulus exact for the
    large exponents of widely spaced bands.
    """
    exponents = np.asarray(exponents, dtype=float)
    delays = np.asarray(delays, dtype=float)
    return np.exp(-1j * plan.subcarrier_spacing * np.outer(exponents, delays))


def steering_from_delays(delays: Sequence[float], plan: BandPlan) -> SteeringSet:
    """Phase factors of the given delays on the plan's grid."""
    delays = check_delays(delays, plan)
    phis = phase_powers(delays, plan, np.ones(1))[0]
    thetas = phase_powers(delays, plan, plan.band_offsets)
    return SteeringSet(phis=phis, thetas=thetas)


def vandermonde(phis: Sequence[complex], rows: int) -> np.ndarray:
    """rows x K Vandermonde matrix with entry (r, k) = phis[k]**r."""
    if int(rows) != rows or rows < 1:
        raise ArgumentError(f"rows must be a positive integer, got {rows}")
    phis = np.atleast_1d(np.asarray(phis, dtype=complex))
    return np.vander(phis, N=int(rows), increasing=True).T


def band_manifold(delays: np.ndarray, plan: BandPlan, band: int, rows: int) -> np.ndarray:
    """Block M' Theta_i of height ``rows`` for one band."""
    exponents = plan.band_offsets[band] + np.arange(rows)
    return phase_powers(delays, plan, exponents)


def manifold_exponents(plan: BandPlan, rows: int) -> np.ndarray:
    """Exponent n_i + n of every row of the stacked manifold."""
    return (plan.band_offsets[:, None] + np.arange(rows)[None, :]).ravel()


def stacked_manifold(delays: Sequence[float], plan: BandPlan, rows: int) -> np.ndarray:
    """(L*rows) x K stack of the blocks M' Theta_i, i = 0..L-1.

    With ``rows = N`` this is A(tau) of the multiband model h = A(tau) alpha.
    """
    if int(rows) != rows or rows < 1:
        raise ArgumentError(f"rows must be a positive integer, got {rows}")
    delays = check_delays(delays, plan)
    return phase_powers(delays, plan, manifold_exponents(plan, int(rows)))


def channel_samples(ch: MultipathChannel, plan: BandPlan, band: int) -> np.ndarray:
    """Noiseless length-N frequency samples h_i = M Theta_i alpha of one band."""
    if not 0 <= band < plan.n_bands:
        raise ArgumentError(f"band index {band} out of range [0, {plan.n_bands})")
    delays = check_delays(ch.delays, plan)
    return band_manifold(delays, plan, band, plan.n_subcarriers) @ ch.gains
