"""Utility functions for tdfit."""

import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np


def db_to_linear(value_db: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Convert a power ratio in dB to linear scale."""
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def complex_to_pairs(values: np.ndarray) -> list:
    """Convert a complex array to nested ``[re, im]`` lists.

    The innermost axis of the result has length 2, so a length-N vector becomes
    an N x 2 list and an L x N matrix becomes L x N x 2.
    """
    arr = np.asarray(values, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def pairs_to_complex(pairs: Sequence) -> np.ndarray:
    """Inverse of :func:`complex_to_pairs`."""
    arr = np.asarray(pairs, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError(f"expected [re, im] pairs, got trailing dimension {arr.shape[-1]}")
    return arr[..., 0] + 1j * arr[..., 1]


def circular_distance(a: np.ndarray, b: np.ndarray, period: float) -> np.ndarray:
    """Distance between delays on a circle of circumference ``period``."""
    diff = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), period)
    return np.minimum(diff, period - diff)


def ensure_dir(path: Path) -> None:
    """Ensure directory exists."""
    path.mkdir(parents=True, exist_ok=True)


def atomic_write_bytes(path: Path, content: bytes) -> None:
    """Write a file so readers never observe it partially written."""
    path = Path(path)
    ensure_dir(path.parent)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(content)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path, content: str) -> None:
    atomic_write_bytes(path, content.encode("utf-8"))


def git_revision(start: Optional[Path] = None) -> Optional[Dict[str, Union[str, bool]]]:
    """Describe the git checkout containing ``start`` (default: cwd).

    Returns None outside a repository or when git is unavailable.
    """
    try:
        import git

        repo = git.Repo(start or Path.cwd(), search_parent_directories=True)
        info: Dict[str, Union[str, bool]] = {
            "commit": repo.head.commit.hexsha,
            "dirty": repo.is_dirty(untracked_files=False),
        }
        if not repo.head.is_detached:
            info["branch"] = repo.active_branch.name
        return info
    except Exception:
        # Provenance is best effort
        return None


def as_float_list(values: np.ndarray) -> List[float]:
    """Plain-float list of a real array (YAML/JSON friendly)."""
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]
