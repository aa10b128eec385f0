"""Singular value decomposition and rank-r truncation.

Backed by LAPACK through numpy; computation runs in float64 regardless
of the input dtype. Column signs are normalized (largest-magnitude entry
of each left singular vector made non-negative) so results are
deterministic and golden-file friendly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray  # (m, k)
    sigma: np.ndarray  # (k,), non-increasing
    vt: np.ndarray  # (k, n)


def svd(m: np.ndarray) -> SvdResult:
    """Full thin SVD of a dense matrix with normalized signs."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"svd expects a matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise NumericError("svd input contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc

    # Fix signs: largest-|entry| of each u column becomes non-negative.
    for j in range(u.shape[1]):
        pivot = np.argmax(np.abs(u[:, j]))
        if u[pivot, j] < 0:
            u[:, j] = -u[:, j]
            vt[j, :] = -vt[j, :]
    return SvdResult(u=u, sigma=s, vt=vt)


def svd_truncate(res: SvdResult, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-r factors (Ur, Sr, Vr) of a decomposition."""
    k = res.sigma.shape[0]
    if not 1 <= r <= k:
        raise ValidationError(f"truncation rank {r} out of range [1, {k}]")
    return res.u[:, :r], res.sigma[:r], res.vt[:r, :]


def truncation_error(sigma: np.ndarray, r: int) -> float:
    """Frobenius error of the best rank-r approximation: the root of
    the discarded singular energy."""
    tail = np.asarray(sigma, dtype=np.float64)[r:]
    return float(np.sqrt(np.sum(tail * tail)))
