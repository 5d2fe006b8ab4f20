"""Small dense linear-algebra helpers that work on stacks of matrices."""
from __future__ import annotations

import numpy as np

from .errors import NotSymmetric

PINV_RCOND = 1e-10


def symmetrize(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def pinv_psd(m, rel_cutoff: float = PINV_RCOND, return_cond: bool = False):
    """Moore-Penrose inverse of a symmetric PSD matrix via ``eigh``.

    Eigenvalues at or below ``rel_cutoff`` times the largest eigenvalue are
    treated as zero.  Accepts a stack ``(..., r, r)``.  With ``return_cond``
    also returns the ratio of the largest to the smallest retained eigenvalue.
    """
    m = np.asarray(m, dtype=float)
    scale = np.max(np.abs(m), axis=(-1, -2), keepdims=True)
    asym = np.max(np.abs(m - np.swapaxes(m, -1, -2)), axis=(-1, -2), keepdims=True)
    if np.any(asym > 1e-8 * scale):
        raise NotSymmetric("matrix is not symmetric")
    evals, evecs = np.linalg.eigh(symmetrize(m))
    top = np.max(evals, axis=-1, keepdims=True)
    keep = evals > rel_cutoff * np.maximum(top, 0.0)
    inv = np.where(keep, 1.0 / np.where(keep, evals, 1.0), 0.0)
    pinv = (evecs * inv[..., None, :]) @ np.swapaxes(evecs, -1, -2)
    if not return_cond:
        return pinv
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = top[..., 0] * np.max(inv, axis=-1)
    return pinv, np.where(np.isfinite(cond), cond, 1.0)


def nullspace_basis(lmat):
    """Orthonormal basis ``B`` (q x (q-p)) of ``{x : L^T x = 0}`` for ``L`` of shape (q, p)."""
    lmat = np.asarray(lmat, dtype=float)
    q, p = lmat.shape
    u, sv, _ = np.linalg.svd(lmat, full_matrices=True)
    tol = max(q, p) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol))
    return u[:, rank:], rank
