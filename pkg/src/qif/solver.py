"""QIF objective, its exact gradient, and the IRGLS minimiser.

The minimiser works on a stack of problems that share a design matrix and
basis (``irgls_batch``); ``fit`` is the single-dataset front end.  Linear
constraints ``L^T beta = b`` are handled by writing ``beta = beta0 + B gamma``
with ``B`` an orthonormal basis of ``null(L^T)`` and iterating in ``gamma``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .corrbasis import BasisSet
from .errors import NonFiniteInput, RankDeficientConstraint, SingularCurvature
from .linalg import PINV_RCOND, nullspace_basis, pinv_psd, symmetrize
from .model import Family, LongitudinalDataset, check_responses
from .score import _check_dataset_basis, score_arrays

__all__ = [
    "FitOptions", "FitResult", "LinearConstraint", "QifEval",
    "fit", "irgls_batch", "pinv_psd", "qif_value",
]


@dataclass(frozen=True)
class QifEval:
    q_value: float
    gradient: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LinearConstraint:
    """``L^T beta = b`` with ``L`` of shape (q, p)."""

    l: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        lmat = np.array(self.l, dtype=float)
        if lmat.ndim == 1:
            lmat = lmat[:, None]
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.shape[0] != lmat.shape[1]:
            raise ValueError(f"b has length {b.shape[0]}, expected {lmat.shape[1]}")
        if not (np.all(np.isfinite(lmat)) and np.all(np.isfinite(b))):
            raise NonFiniteInput("constraint has non-finite entries")
        object.__setattr__(self, "l", lmat)
        object.__setattr__(self, "b", b)

    @property
    def p(self) -> int:
        return self.l.shape[1]

    @classmethod
    def pin(cls, q: int, indices, values=None) -> "LinearConstraint":
        """Constrain ``beta[k] = values[k]`` for each ``k`` in ``indices``."""
        indices = list(indices)
        lmat = np.zeros((q, len(indices)))
        lmat[indices, np.arange(len(indices))] = 1.0
        b = np.zeros(len(indices)) if values is None else np.asarray(values, dtype=float)
        return cls(lmat, b)

    def parameterization(self):
        """Return ``(beta0, B)``: least-norm feasible point and null-space basis."""
        B, rank = nullspace_basis(self.l)
        if rank < self.p:
            raise RankDeficientConstraint(f"L has rank {rank} < {self.p}")
        beta0 = np.linalg.lstsq(self.l.T, self.b, rcond=None)[0]
        return beta0, B


@dataclass(frozen=True)
class FitOptions:
    grad_tol: float = 1e-6
    step_tol: float = 1e-10
    max_iter: int = 200
    max_halvings: int = 30
    rel_cutoff: float = PINV_RCOND
    ridge_trigger: float = 1e-10
    ridge_scale: float = 1e-8
    # Q_N rounding noise is taken as q_noise * eps * cond(C) * max(1, Q);
    # see the stalled-search fallback in irgls_batch
    q_noise: float = 16.0
    noise_halvings: int = 8
    max_expand: float = 32.0


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    q_min: float
    iterations: int
    converged: bool
    j_hat_at_min: np.ndarray
    gradient_norm: float
    constraint: Optional[LinearConstraint] = None
    n_subjects: int = 0
    r: int = 0
    q_history: tuple = field(default=(), repr=False)
    q_noise_history: tuple = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

_EPS = np.finfo(float).eps


class _Eval(NamedTuple):
    q_value: np.ndarray
    gradient: np.ndarray
    j_hat: np.ndarray
    bad: np.ndarray
    noise: np.ndarray  # rounding-noise scale of q_value
    lead: np.ndarray = None  # 2N grad(gbar)^T C^+ gbar, the leading gradient term


def _evaluate(family, mats, y, X, beta, derivs, rel_cutoff=PINV_RCOND) -> _Eval:
    N = y.shape[1]
    sa = score_arrays(family, mats, y, X, beta, derivs=derivs)
    cinv, cond = pinv_psd(symmetrize(sa.c_hat), rel_cutoff, return_cond=True)
    cg = np.matmul(cinv, sa.gbar[..., None])[..., 0]
    qv = N * np.einsum("br,br->b", sa.gbar, cg)
    bad = sa.bad | ~np.isfinite(qv)
    noise = _EPS * cond * np.maximum(1.0, np.abs(qv))
    if not derivs:
        return _Eval(qv, None, None, bad, noise)
    jac = sa.gbar_jac
    lead = 2.0 * N * np.einsum("br,brk->bk", cg, jac)
    grad = lead - N * np.einsum("bkrs,br,bs->bk", sa.c_hat_partials, cg, cg)
    jhat = symmetrize(np.swapaxes(jac, -1, -2) @ cinv @ jac)
    bad |= ~np.all(np.isfinite(grad), axis=-1)
    return _Eval(qv, grad, jhat, bad, noise, lead)


def qif_value(family: Family, basis: BasisSet, dataset: LongitudinalDataset, beta,
              want_gradient: bool = True) -> QifEval:
    """``Q_N(beta) = N gbar^T pinv(C) gbar`` and optionally its exact gradient."""
    _check_dataset_basis(basis, dataset)
    beta = np.asarray(beta, dtype=float).reshape(1, -1)
    if not np.all(np.isfinite(beta)):
        raise NonFiniteInput("beta has non-finite entries")
    ev = _evaluate(family, basis.stack(), dataset.y[None], dataset.X, beta, want_gradient)
    if ev.bad[0]:
        raise NonFiniteInput("QIF is not finite at this beta")
    grad = None if ev.gradient is None else ev.gradient[0]
    return QifEval(float(ev.q_value[0]), grad)


# ---------------------------------------------------------------------------
# IRGLS
# ---------------------------------------------------------------------------

class BatchFit(NamedTuple):
    beta: np.ndarray        # (B, q)
    q_value: np.ndarray     # (B,)
    iterations: np.ndarray  # (B,)
    converged: np.ndarray   # (B,)
    failed: np.ndarray      # (B,) non-finite start or singular curvature
    singular: np.ndarray    # (B,)
    j_hat: np.ndarray       # (B, q, q)
    grad_norm: np.ndarray   # (B,)
    history: np.ndarray     # (B, max_iter + 1), Q at accepted iterates, NaN padded
    noise: np.ndarray       # (B, max_iter + 1), allowed Q rise when leaving each iterate


def _newton_direction(jg, gg, N, opts):
    """``-(2N)^{-1} J^{-1} grad`` with a ridge when ``J`` is near singular."""
    d = jg.shape[-1]
    evals = np.linalg.eigvalsh(jg)
    lo, hi = evals[:, 0], evals[:, -1]
    need = lo < opts.ridge_trigger * hi
    if np.any(need):
        ridge = opts.ridge_scale * np.trace(jg, axis1=-2, axis2=-1) / d
        jg = jg + np.where(need, ridge, 0.0)[:, None, None] * np.eye(d)
        evals = np.linalg.eigvalsh(jg)
        lo, hi = evals[:, 0], evals[:, -1]
    singular = ~(hi > 0) | (lo <= opts.ridge_trigger * 1e-6 * hi) | ~np.isfinite(hi)
    safe = np.where(singular[:, None, None], np.eye(d), jg)
    step = -np.linalg.solve(safe, gg[..., None])[..., 0] / (2.0 * N)
    return step, singular


def irgls_batch(family: Family, mats: np.ndarray, y: np.ndarray, X: np.ndarray,
                init: np.ndarray, constraint: Optional[LinearConstraint] = None,
                options: FitOptions = FitOptions()) -> BatchFit:
    """Minimise ``Q_N`` for each of ``B`` response sets sharing design ``X``.

    ``y`` has shape (B, N, n), ``X`` shape (N, n, q) or (B, N, n, q) and
    ``init`` shape (B, q).  Accepted iterates never increase ``Q_N`` by more
    than its rounding noise, recorded per iterate in ``BatchFit.noise``.
    """
    opts = options
    Bsz, N, _ = y.shape
    q = X.shape[-1]
    init = np.broadcast_to(np.asarray(init, dtype=float), (Bsz, q))
    if constraint is None:
        beta0, nb = np.zeros(q), np.eye(q)
    else:
        if constraint.l.shape[0] != q:
            raise ValueError("constraint L has the wrong number of rows")
        beta0, nb = constraint.parameterization()
    d = nb.shape[1]
    gamma = (init - beta0) @ nb

    def gather(idx):
        yy = y[idx]
        xx = X if X.ndim == 3 else X[idx]
        return yy, xx

    def to_beta(g):
        return beta0 + g @ nb.T

    beta_out = to_beta(gamma)
    q_out = np.full(Bsz, np.nan)
    iters = np.zeros(Bsz, dtype=int)
    converged = np.zeros(Bsz, dtype=bool)
    failed = np.zeros(Bsz, dtype=bool)
    singular_out = np.zeros(Bsz, dtype=bool)
    jhat_out = np.full((Bsz, q, q), np.nan)
    gnorm_out = np.full(Bsz, np.nan)
    history = np.full((Bsz, opts.max_iter + 1), np.nan)
    noise_hist = np.full((Bsz, opts.max_iter + 1), np.nan)
    tiny_step = np.zeros(Bsz, dtype=bool)

    def ladder_ok(idx, g0, stp, q0, band, gn, ladder, derivs):
        """Acceptance matrix (rows, len(ladder)) for trial points g0 + t * stp."""
        k = ladder.size
        rows = np.repeat(idx, k)
        trial = np.repeat(g0, k, axis=0) + np.tile(ladder, idx.size)[:, None] * np.repeat(stp, k, axis=0)
        lev = _evaluate(family, mats, *gather(rows), to_beta(trial), derivs, opts.rel_cutoff)
        q_old, band = np.repeat(q0, k), np.repeat(band, k)
        if derivs:
            tgn = np.max(np.abs(lev.gradient @ nb), axis=-1)
            ok = ~lev.bad & (lev.q_value <= q_old + band) & (tgn < np.repeat(gn, k))
        else:
            ok = ~lev.bad & (lev.q_value < q_old - band)
        return ok.reshape(idx.size, k)

    active = np.arange(Bsz)
    while active.size:
        yy, xx = gather(active)
        beta = to_beta(gamma[active])
        ev = _evaluate(family, mats, yy, xx, beta, True, opts.rel_cutoff)
        qv = ev.q_value
        gg = ev.gradient @ nb
        gnorm = np.max(np.abs(gg), axis=-1) if d else np.zeros(active.size)

        beta_out[active] = beta
        q_out[active] = qv
        jhat_out[active] = ev.j_hat
        gnorm_out[active] = gnorm
        history[active, iters[active]] = qv
        noise_hist[active, iters[active]] = opts.q_noise * ev.noise

        bad = ev.bad
        conv = ~bad & (gnorm <= opts.grad_tol * np.maximum(1.0, qv))
        converged[active] = conv
        stop = bad | conv | (iters[active] >= opts.max_iter) | tiny_step[active]
        failed[active[bad]] = True
        if d == 0:
            break
        keep = ~stop
        noise_all = opts.q_noise * ev.noise[keep]
        active, qv, gg, gnorm = active[keep], qv[keep], gg[keep], gnorm[keep]
        gg_step = gg
        if not active.size:
            break
        jg = nb.T @ ev.j_hat[keep] @ nb
        step, sing = _newton_direction(jg, gg, N, opts)
        # Gauss-Newton step that drops the dC/dbeta part of the gradient
        gn_step, _ = _newton_direction(jg, ev.lead[keep] @ nb, N, opts)
        if np.any(sing):
            singular_out[active[sing]] = True
            failed[active[sing]] = True
            active, qv, step, gnorm = active[~sing], qv[~sing], step[~sing], gnorm[~sing]
            gg_step, gn_step = gg[~sing], gn_step[~sing]
            noise_all = noise_all[~sing]
            if not active.size:
                break

        tiny_step[active] = np.linalg.norm(step, axis=-1) <= opts.step_tol

        # Step halving until Q decreases by more than its rounding noise.  The
        # full step is tried first; stragglers evaluate the whole ladder
        # t = 2^-1 .. 2^-max_halvings in one batch and keep the longest
        # acceptable t, which is what sequential halving would pick.
        t = np.ones(active.size)
        tev = _evaluate(family, mats, *gather(active), to_beta(gamma[active] + step),
                        False, opts.rel_cutoff)
        accepted = ~tev.bad & (tev.q_value < qv - noise_all)
        # Far from the minimum the C-derivative term can steer the exact step
        # towards the plateau Q -> const as |beta| -> inf.  The full
        # Gauss-Newton step replaces it whenever it reaches a lower Q.
        gev = _evaluate(family, mats, *gather(active), to_beta(gamma[active] + gn_step),
                        False, opts.rel_cutoff)
        use_gn = (~gev.bad & (gev.q_value < qv - noise_all)
                  & (~accepted | (gev.q_value < tev.q_value)))
        accepted |= use_gn
        # a predicted decrease inside the noise band cannot be resolved by Q
        predicted = -0.5 * np.einsum("bk,bk->b", gg_step, step)
        resolvable = predicted > noise_all

        # If the accepted full step gained much more than the local model
        # predicts, the curvature J overstates the true one by a factor
        # ~1/c.  Try the rescaled step once and keep it if Q drops further.
        ext = np.flatnonzero(accepted & resolvable & ~use_gn)
        if ext.size and opts.max_expand > 1:
            ratio = (qv[ext] - tev.q_value[ext]) / predicted[ext]
            c = 2.0 - ratio
            ext, c = ext[c < 0.5], c[c < 0.5]
            if ext.size:
                t_ext = np.minimum(1.0 / np.maximum(c, 1.0 / opts.max_expand), opts.max_expand)
                eev = _evaluate(family, mats, *gather(active[ext]),
                                to_beta(gamma[active[ext]] + t_ext[:, None] * step[ext]),
                                False, opts.rel_cutoff)
                better = ~eev.bad & (eev.q_value < tev.q_value[ext])
                t[ext[better]] = t_ext[better]
        pending = np.flatnonzero(~accepted & resolvable)
        if pending.size:
            ladder = 0.5 ** np.arange(1, opts.max_halvings + 1)
            ok = ladder_ok(active[pending], gamma[active[pending]], step[pending], qv[pending],
                           noise_all[pending], gnorm[pending], ladder, derivs=False)
            first = _first_true(ok)
            hit = first >= 0
            t[pending[hit]] = ladder[first[hit]]
            accepted[pending[hit]] = True
        pending = np.flatnonzero(~accepted)
        # Near the optimum the decrease needed to meet grad_tol can fall below
        # the rounding noise of Q_N.  There, accept the longest halved step
        # that keeps Q within that noise and strictly shrinks the gradient.
        for ladder in (np.ones(1), 0.5 ** np.arange(1, opts.noise_halvings)):
            if not pending.size:
                break
            ok = ladder_ok(active[pending], gamma[active[pending]], step[pending], qv[pending],
                           noise_all[pending], gnorm[pending], ladder, derivs=True)
            first = _first_true(ok)
            hit = first >= 0
            t[pending[hit]] = ladder[first[hit]]
            accepted[pending[hit]] = True
            pending = pending[~hit]
        acc_idx = active[accepted]
        step = np.where(use_gn[:, None], gn_step, step)
        delta = t[accepted, None] * step[accepted]
        gamma[acc_idx] += delta
        iters[acc_idx] += 1
        # a failed line search ends the run with the current iterate
        active = acc_idx

    return BatchFit(beta_out, q_out, iters, converged, failed, singular_out,
                    jhat_out, gnorm_out, history, noise_hist)


def _first_true(mask):
    """Column index of the first True per row, -1 where none."""
    first = np.argmax(mask, axis=1)
    return np.where(mask[np.arange(mask.shape[0]), first], first, -1)


def _starts(init, q, multistart):
    if not multistart:
        return init[None]
    offsets = np.vstack([np.zeros(q), np.eye(q), -np.eye(q)])
    return init[None] + offsets


def fit(family: Family, basis: BasisSet, dataset: LongitudinalDataset, init=None,
        constraint: Optional[LinearConstraint] = None, options: FitOptions = FitOptions(),
        multistart: bool = False) -> FitResult:
    """Minimise the QIF by IRGLS, optionally under ``L^T beta = b``.

    Non-convergence is reported through ``converged=False`` rather than raised.

    Raises
    ------
    NonFiniteInput
        The objective cannot be evaluated at the starting point.
    SingularCurvature
        The (projected) curvature stays singular after regularisation.
    """
    _check_dataset_basis(basis, dataset)
    check_responses(family, dataset)
    q = dataset.n_covariates
    init = np.zeros(q) if init is None else np.asarray(init, dtype=float).reshape(-1)
    if init.shape[0] != q:
        raise ValueError(f"init has length {init.shape[0]}, expected {q}")
    starts = _starts(init, q, multistart)
    y = np.broadcast_to(dataset.y, (starts.shape[0],) + dataset.y.shape)
    res = irgls_batch(family, basis.stack(), y, dataset.X, starts, constraint, options)

    ok = ~res.failed
    if not np.any(ok):
        if np.any(res.singular):
            raise SingularCurvature("curvature matrix is singular after regularisation")
        raise NonFiniteInput("QIF is not finite at the starting value")
    score = np.where(ok, res.q_value, np.inf)
    if np.any(res.converged & ok):
        score = np.where(res.converged, score, np.inf)
    k = int(np.argmin(score))
    hist = res.history[k]
    return FitResult(
        beta_hat=res.beta[k].copy(),
        q_min=float(res.q_value[k]),
        iterations=int(res.iterations[k]),
        converged=bool(res.converged[k]),
        j_hat_at_min=res.j_hat[k].copy(),
        gradient_norm=float(res.grad_norm[k]),
        constraint=constraint,
        n_subjects=dataset.n_subjects,
        r=basis.s * q,
        q_history=tuple(hist[np.isfinite(hist)]),
        q_noise_history=tuple(res.noise[k][np.isfinite(hist)]),
    )
