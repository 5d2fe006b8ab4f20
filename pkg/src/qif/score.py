"""Extended score vectors and their moment matrices.

For subject ``i`` and basis matrix ``M_j`` the score block is

    g_ij = grad_h_i^T A_i^{-1/2} M_j A_i^{-1/2} (Y_i - h_i)

and the blocks are stacked into ``g_i`` of length ``r = q * s`` (block ``j``
occupies entries ``j*q .. j*q + q - 1``).

The array routines here carry an optional leading batch axis so that many
independent datasets sharing one design can be processed together (used by
the Monte Carlo harness).  Summation over subjects is always done in a fixed
order along the subject axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .corrbasis import BasisSet
from .errors import NonFiniteInput
from .linalg import pinv_psd
from .model import VARIANCE_FLOOR, Family, LongitudinalDataset, SubjectRecord, evaluate_subject


class ScoreArrays(NamedTuple):
    gbar: np.ndarray            # (B, r)
    c_hat: np.ndarray           # (B, r, r)
    gbar_jac: np.ndarray        # (B, r, q) or None
    c_hat_partials: np.ndarray  # (B, q, r, r) or None
    bad: np.ndarray             # (B,) bool, degenerate link/variance


def score_arrays(family: Family, mats: np.ndarray, y: np.ndarray, X: np.ndarray,
                 beta: np.ndarray, derivs: bool = True) -> ScoreArrays:
    """Batched extended-score moments.

    Parameters
    ----------
    family : Family
    mats : ndarray, shape (s, n, n)
    y : ndarray, shape (B, N, n)
    X : ndarray, shape (N, n, q) or (B, N, n, q)
    beta : ndarray, shape (B, q)
    derivs : bool
        Also return the Jacobian of ``gbar`` and the partials of ``c_hat``.
    """
    B, N, n = y.shape
    q = X.shape[-1]
    s = mats.shape[0]
    r = s * q
    Xe = X[..., None, :, :]                                   # (.., N, 1, n, q)
    XeT = np.swapaxes(Xe, -1, -2)

    eta = np.matmul(X, beta[:, None, :, None])[..., 0]       # (B, N, n)
    with np.errstate(over="ignore", invalid="ignore"):
        mu, d1, d2, w, dw, var = family.link_terms(eta)
    bad = ~(np.all(np.isfinite(eta), axis=(1, 2))
            & np.all(np.isfinite(var) & (var >= VARIANCE_FLOOR), axis=(1, 2)))
    if np.any(bad):
        # keep the arithmetic finite for the healthy batch members
        fix = bad[:, None, None]
        mu = np.where(fix, 0.5, mu)
        d1 = np.where(fix, 0.25, d1)
        d2 = np.where(fix, 0.0, d2)
        w = np.where(fix, 2.0, w)
        dw = np.where(fix, 0.0, dw)

    resid = y - mu
    u = w * resid
    c = d1 * w
    a = np.einsum("jtv,biv->bijt", mats, u)                   # (B, N, s, n)
    g4 = np.matmul((c[:, :, None, :] * a)[..., None, :], Xe)[..., 0, :]   # (B, N, s, q)
    g = g4.reshape(B, N, r)

    gbar = g.sum(axis=1) / N
    c_hat = np.matmul(np.swapaxes(g, 1, 2), g) / N
    if not derivs:
        return ScoreArrays(gbar, c_hat, None, None, bad)

    dc = d2 * w + d1 * dw
    du = dw * resid - w * d1
    # derivative of the outer (grad_h^T A^{-1/2}) factor
    t1 = np.matmul(XeT, (dc[:, :, None, :] * a)[..., None] * Xe)          # (B, N, s, q, q)
    # derivative of A^{-1/2}(Y - h)
    V = du[..., None] * X                                                  # (B, N, n, q)
    MV = np.matmul(mats[None, None], V[:, :, None])                        # (B, N, s, n, q)
    t2 = np.matmul(XeT, c[:, :, None, :, None] * MV)
    dg = (t1 + t2).reshape(B, N, r, q)

    gbar_jac = dg.sum(axis=1) / N
    P = np.einsum("birl,bis->blrs", dg, g) / N
    c_hat_partials = P + np.swapaxes(P, -1, -2)
    return ScoreArrays(gbar, c_hat, gbar_jac, c_hat_partials, bad)


@dataclass(frozen=True)
class ScoreState:
    beta: np.ndarray
    gbar: np.ndarray
    c_hat: np.ndarray
    gbar_jac: np.ndarray = None
    c_hat_partials: tuple = None
    j_hat: np.ndarray = None

    @property
    def r(self) -> int:
        return self.gbar.shape[0]


def subject_score(family: Family, basis: BasisSet, subject: SubjectRecord, beta) -> np.ndarray:
    """Extended score ``g_i`` of one subject (length ``q * s``)."""
    ev = evaluate_subject(family, subject, beta)
    w = np.diag(ev.a_inv_sqrt_i)
    u = w * (subject.y - ev.h_i)
    left = ev.grad_h_i.T * w
    return np.concatenate([left @ (m @ u) for m in basis.matrices])


def _check_dataset_basis(basis: BasisSet, dataset: LongitudinalDataset):
    if basis.n != dataset.n_times:
        raise ValueError(f"basis dimension {basis.n} does not match {dataset.n_times} time points")


def score_state(family: Family, basis: BasisSet, dataset: LongitudinalDataset, beta,
                with_derivatives: bool = True) -> ScoreState:
    _check_dataset_basis(basis, dataset)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != dataset.n_covariates:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {dataset.n_covariates}")
    if not np.all(np.isfinite(beta)):
        raise NonFiniteInput("beta has non-finite entries")
    sa = score_arrays(family, basis.stack(), dataset.y[None], dataset.X, beta[None],
                      derivs=with_derivatives)
    if sa.bad[0]:
        raise NonFiniteInput("linear predictor or variance degenerate at current beta")
    if not with_derivatives:
        return ScoreState(beta, sa.gbar[0], sa.c_hat[0])
    jac = sa.gbar_jac[0]
    j_hat = jac.T @ pinv_psd(sa.c_hat[0]) @ jac
    return ScoreState(beta, sa.gbar[0], sa.c_hat[0], jac,
                      tuple(sa.c_hat_partials[0]), 0.5 * (j_hat + j_hat.T))
