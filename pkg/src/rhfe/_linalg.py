"""Shared numerical-linear-algebra helpers and tolerances.

One rank tolerance is used everywhere a rank decision is made (relative
degree, zero classification, pseudo-inverses) so that verdicts are
reproducible: singular values below ``max(shape) * ||M||_2 * RANK_RTOL``
count as zero.
"""

from __future__ import annotations

import numpy as np

RANK_RTOL = 1e-10
# |1 - |lambda|| below this counts as "on the unit circle".
UNIT_CIRCLE_TOL = 1e-8


def spectral_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def rank_threshold(m: np.ndarray) -> float:
    return max(m.shape) * spectral_norm(m) * RANK_RTOL


def numerical_rank(m: np.ndarray) -> int:
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > max(m.shape) * s[0] * RANK_RTOL)) if s[0] > 0 else 0


def pinv(m: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(m, rcond=max(m.shape) * RANK_RTOL)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def is_psd(m: np.ndarray, tol: float = 1e-9) -> bool:
    w = np.linalg.eigvalsh(symmetrize(m))
    return bool(w.min() >= -tol * max(1.0, abs(w.max())))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric factor W with W @ W.T == m for PSD m (round-off clipped)."""
    w, v = np.linalg.eigh(symmetrize(m))
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def observability_matrix(phi: np.ndarray, c: np.ndarray, blocks: int) -> np.ndarray:
    rows = [c]
    for _ in range(blocks - 1):
        rows.append(rows[-1] @ phi)
    return np.vstack(rows)


def observability_index(phi: np.ndarray, c: np.ndarray) -> int:
    """Smallest i such that rank(O_i) has saturated."""
    n = phi.shape[0]
    full = numerical_rank(observability_matrix(phi, c, n))
    for i in range(1, n + 1):
        if numerical_rank(observability_matrix(phi, c, i)) == full:
            return i
    return n
