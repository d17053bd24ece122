"""Hankel lifting and signal-subspace estimation.

Each band's length-N estimate is lifted to a P x Q Hankel matrix with entry
(p, q) = h_i[p + q] and P = N - Q + 1, so every sample is used once on the
anti-diagonals. Noiseless blocks factor as ``H_i = M' Theta_i X``; they share
the column span of M', which is estimated from the row-block matrix
``[H_0 ... H_{L-1}]``, used to denoise every block, and the denoised blocks are
stacked into the column-block matrix whose K-dimensional basis U feeds the
subspace fit.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, DegenerateDataError
from .frontend import ChannelEstimate
from .model import BandPlan

logger = logging.getLogger(__name__)

# sigma_K / sigma_1 below this is treated as rank deficient
RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HankelStack:
    """L Hankel blocks of size P x (S*Q)."""

    blocks: np.ndarray
    p_rows: int
    q_cols: int
    snapshots: int = 1
    plan: Optional[BandPlan] = None

    @property
    def n_bands(self) -> int:
        return int(self.blocks.shape[0])

    def row_block(self) -> np.ndarray:
        """H_r = [H_0 H_1 ... H_{L-1}] (P x L*S*Q)."""
        return np.concatenate(list(self.blocks), axis=1)


@dataclass(frozen=True, eq=False)
class SignalBasis:
    """Orthonormal K-dimensional basis U of the stacked, denoised blocks."""

    basis: np.ndarray
    singular_values: np.ndarray
    p_rows: int
    k_paths: int
    l_bands: int
    plan: Optional[BandPlan] = None

    def band_block(self, band: int) -> np.ndarray:
        """Rows of U belonging to one band (P x K)."""
        return self.basis[band * self.p_rows : (band + 1) * self.p_rows]


def default_q_cols(n_subcarriers: int, k_paths: int) -> int:
    """Q = ceil(N/3) clamped to [K, N+1-(K+2)]."""
    q = int(np.ceil(n_subcarriers / 3))
    upper = n_subcarriers + 1 - (k_paths + 2)
    if upper < k_paths:
        raise ArgumentError(
            f"N = {n_subcarriers} subcarriers cannot support K = {k_paths} paths"
        )
    return int(min(max(q, k_paths), upper))


def hankel_lift(
    est: ChannelEstimate, q_cols: int, k_paths: Optional[int] = None
) -> HankelStack:
    """Per-band P x Q Hankel blocks of one snapshot.

    With ``k_paths`` given, the dimensions are also checked against the
    requirements of the subspace fit (P - 1 > K and Q >= K).
    """
    n = est.plan.n_subcarriers
    if int(q_cols) != q_cols or not 1 <= q_cols <= n:
        raise ArgumentError(f"q_cols must be in [1, {n}], got {q_cols}")
    q_cols = int(q_cols)
    p_rows = n - q_cols + 1
    if k_paths is not None and (p_rows - 1 <= k_paths or q_cols < k_paths):
        raise ArgumentError(
            f"Q = {q_cols} gives P = {p_rows}; need P - 1 > K and Q >= K for K = {k_paths}"
        )
    # sliding_window_view gives (P, Q) with [p, q] = h[p + q]; copy to own the memory
    blocks = np.stack([sliding_window_view(h, q_cols) for h in est.per_band]).copy()
    return HankelStack(
        blocks=blocks, p_rows=p_rows, q_cols=q_cols, snapshots=1, plan=est.plan
    )


def fuse_snapshots(stacks: Sequence[HankelStack]) -> HankelStack:
    """Concatenate snapshots column-wise: block i becomes P x (S*Q)."""
    stacks = list(stacks)
    if not stacks:
        raise ArgumentError("no Hankel stacks to fuse")
    first = stacks[0]
    expected = (first.n_bands, first.p_rows, first.q_cols)
    for s, stack in enumerate(stacks[1:], start=1):
        shape = (stack.n_bands, stack.p_rows, stack.q_cols)
        if shape != expected:
            raise ArgumentError(f"stack {s} has (L, P, Q) = {shape}, expected {expected}")
    if len(stacks) == 1:
        return first
    return HankelStack(
        blocks=np.concatenate([s.blocks for s in stacks], axis=2),
        p_rows=first.p_rows,
        q_cols=first.q_cols,
        snapshots=sum(s.snapshots for s in stacks),
        plan=first.plan,
    )


def leading_subspace(matrix: np.ndarray, k_paths: int, what: str = "data"):
    """Leading ``k_paths`` left singular vectors and singular values."""
    if k_paths < 1 or k_paths > min(matrix.shape):
        raise ArgumentError(
            f"cannot extract {k_paths} components from a {matrix.shape[0]} x "
            f"{matrix.shape[1]} {what} matrix"
        )
    u, s, _ = np.linalg.svd(matrix, full_matrices=False)
    if s[0] == 0 or s[k_paths - 1] / s[0] < RANK_TOL:
        raise DegenerateDataError(
            f"{what} matrix has numerical rank below K = {k_paths} "
            f"(sigma_K / sigma_1 = {s[k_paths - 1] / s[0] if s[0] else 0.0:.3e})"
        )
    return u[:, :k_paths], s[:k_paths]


def row_block_basis(stack: HankelStack, k_paths: int) -> np.ndarray:
    """P x K orthonormal basis U_r of the column span of H_r."""
    u_r, _ = leading_subspace(stack.row_block(), k_paths, "row-block Hankel")
    return u_r


def denoise_and_stack(
    stack: HankelStack, u_r: np.ndarray, k_paths: Optional[int] = None
) -> SignalBasis:
    """Project every block onto span(U_r), stack them and take the K-dim basis.

    K defaults to the number of columns of U_r.
    """
    if u_r.shape[0] != stack.p_rows:
        raise ArgumentError(f"U_r has {u_r.shape[0]} rows, blocks have P = {stack.p_rows}")
    if k_paths is None:
        k_paths = u_r.shape[1]
    projector = u_r @ u_r.conj().T
    column_block = np.concatenate([projector @ block for block in stack.blocks], axis=0)
    basis, singular_values = leading_subspace(column_block, k_paths, "column-block Hankel")
    return SignalBasis(
        basis=basis,
        singular_values=singular_values,
        p_rows=stack.p_rows,
        k_paths=k_paths,
        l_bands=stack.n_bands,
        plan=stack.plan,
    )


def signal_subspace(
    estimates: Union[ChannelEstimate, Sequence[ChannelEstimate]],
    k_paths: int,
    q_cols: Optional[int] = None,
) -> SignalBasis:
    """Lift, fuse, denoise and stack in one call."""
    estimates = estimate_list(estimates)
    if q_cols is None:
        q_cols = default_q_cols(estimates[0].plan.n_subcarriers, k_paths)
    stack = fuse_snapshots([hankel_lift(e, q_cols, k_paths) for e in estimates])
    u_r = row_block_basis(stack, k_paths)
    basis = denoise_and_stack(stack, u_r)
    logger.debug(
        "signal subspace: L=%d P=%d Q=%d S=%d, singular values %s",
        stack.n_bands,
        stack.p_rows,
        stack.q_cols,
        stack.snapshots,
        np.array2string(basis.singular_values, precision=3),
    )
    return basis


def estimate_list(
    est: Union[ChannelEstimate, Sequence[ChannelEstimate]]
) -> List[ChannelEstimate]:
    """Accept one snapshot or a sequence of snapshots of the same plan."""
    estimates = [est] if isinstance(est, ChannelEstimate) else list(est)
    if not estimates:
        raise ArgumentError("at least one channel estimate is required")
    plan = estimates[0].plan
    for s, e in enumerate(estimates[1:], start=1):
        if e.plan is not plan and e.plan.to_dict() != plan.to_dict():
            raise ArgumentError(f"snapshot {s} uses a different band plan")
    return estimates
