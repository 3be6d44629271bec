"""Block-Toeplitz / block-Hankel assembly for stacked-window operators."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


def _block(blocks, i):
    """blocks[i] with zeros beyond the stored range."""
    if i < len(blocks):
        return blocks[i]
    return np.zeros_like(blocks[-1])


def block_toeplitz(blocks, L: int) -> np.ndarray:
    """Lower triangular block-Toeplitz: block (i, j) = blocks[i - j] for
    i >= j, zero above the diagonal.  ``blocks`` indexed from 0; entries
    beyond the sequence read as zero (banded truncation).
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    br, bc = blocks[0].shape
    out = np.zeros((L * br, L * bc))
    for d in range(L):
        b = _block(blocks, d)
        if b.shape != (br, bc):
            raise ShapeMismatch(f"block {d} has shape {b.shape}, expected {(br, bc)}")
        if d < len(blocks) and np.any(b):
            for j in range(L - d):
                i = j + d
                out[i * br : (i + 1) * br, j * bc : (j + 1) * bc] = b
    return out


def block_hankel(blocks, L: int, m: int) -> np.ndarray:
    """Block-Hankel with block (i, j) = blocks[i + j - 1] (1-based block
    indices), i.e. built from blocks 1..L+m-1.
    """
    if L < 1 or m < 1:
        raise ValueError("L and m must be >= 1")
    if len(blocks) < 2:
        raise ShapeMismatch("need at least block index 1")
    br, bc = blocks[1].shape
    out = np.zeros((L * br, m * bc))
    for i in range(1, L + 1):
        for j in range(1, m + 1):
            b = _block(blocks, i + j - 1)
            out[(i - 1) * br : i * br, (j - 1) * bc : j * bc] = b
    return out


def toeplitz_first_columns(blocks, L: int, tau: int, width: int | None = None) -> np.ndarray:
    """First L - tau block-columns of the L x L lower block-Toeplitz."""
    if tau < 0 or tau >= L:
        raise ValueError("need 0 <= tau < L")
    full = block_toeplitz(blocks, L)
    bc = blocks[0].shape[1]
    return full[:, : (L - tau) * bc]
