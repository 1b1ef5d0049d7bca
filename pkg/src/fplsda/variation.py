"""Split-up variation for repeated measures.

A matrix whose rows come in contiguous subject blocks of ``K`` rows is split
into an offset part (grand mean), a between-subject part (subject mean minus
grand mean) and a within-subject part (row minus subject mean).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True, eq=False)
class SplitVariation:
    X_o: np.ndarray
    X_b: np.ndarray
    X_w: np.ndarray
    subject_means: np.ndarray
    grand_mean: np.ndarray


def _blocks(X: np.ndarray, K: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise StructuralError(f"expected a 2-d matrix, got shape {X.shape}")
    if K < 1 or X.shape[0] == 0 or X.shape[0] % K:
        raise StructuralError(f"{X.shape[0]} rows cannot be split into complete blocks of {K}")
    return X.reshape(X.shape[0] // K, K, X.shape[1])


def split(X: np.ndarray, K: int) -> SplitVariation:
    """Decompose ``X`` (``n*K x p``, contiguous subject blocks) as ``X_o + X_b + X_w``."""
    blocks = _blocks(X, K)
    n, _, p = blocks.shape
    grand = blocks.reshape(n * K, p).mean(axis=0)
    means = blocks.mean(axis=1)
    X_o = np.broadcast_to(grand, (n * K, p)).copy()
    X_b = np.repeat(means - grand, K, axis=0)
    X_w = (blocks - means[:, None, :]).reshape(n * K, p)
    return SplitVariation(X_o, X_b, X_w, means, grand)


def within(X: np.ndarray, K: int) -> np.ndarray:
    """Within-subject part only; each block is centered independently."""
    blocks = _blocks(X, K)
    return (blocks - blocks.mean(axis=1, keepdims=True)).reshape(-1, blocks.shape[2])


def center_new_subject(curves: np.ndarray, K: int | None = None) -> np.ndarray:
    """Center one subject's ``K`` rows on their own mean row."""
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2:
        raise StructuralError("expected one row per condition")
    if K is not None and curves.shape[0] != K:
        raise StructuralError(f"subject has {curves.shape[0]} condition rows, expected {K}")
    return curves - curves.mean(axis=0, keepdims=True)
