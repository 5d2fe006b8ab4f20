"""Tests, goodness of fit, standard errors and noncentrality estimates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corrbasis import BasisSet
from .distributions import chi2_quantile, chi2_sf, noncentral_chi2_sf, power
from .errors import (DegenerateDf, DomainError, NotConverged, RankDeficientConstraint,
                     SingularCurvature)
from .linalg import nullspace_basis, pinv_psd
from .model import Family, LongitudinalDataset
from .solver import FitOptions, FitResult, LinearConstraint, fit

__all__ = [
    "GofResult", "PowerSpec", "TestResult",
    "chi2_quantile", "chi2_sf", "estimate_ncp", "goodness_of_fit",
    "noncentral_chi2_sf", "power", "standard_errors", "test_linear",
]

NEGATIVE_TN_CLAMP = 1e-6


@dataclass(frozen=True)
class TestResult:
    t_n: float
    df: int
    p_value: float
    q_restricted: float
    q_unrestricted: float
    unrestricted: Optional[FitResult] = None
    restricted: Optional[FitResult] = None

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True)
class GofResult:
    q_at_min: float
    df: int
    p_value: float


@dataclass(frozen=True)
class PowerSpec:
    df: int
    ncp: float
    alpha: float = 0.05

    def __post_init__(self):
        if self.df < 1 or self.ncp < 0 or not 0 < self.alpha < 1:
            raise DomainError(f"invalid power specification {self}")

    def power(self) -> float:
        return power(self.df, self.ncp, self.alpha)


def _check_rank(constraint: LinearConstraint, q: int):
    _, rank = nullspace_basis(constraint.l)
    if constraint.l.shape[0] != q:
        raise ValueError(f"L must have {q} rows")
    if rank < constraint.p or constraint.p < 1:
        raise RankDeficientConstraint(f"L has rank {rank}, need {constraint.p}")


def test_statistic(q_restricted: float, q_unrestricted: float) -> float:
    """``Q(restricted) - Q(unrestricted)`` with round-off negatives clamped to zero."""
    t_n = q_restricted - q_unrestricted
    if t_n < -NEGATIVE_TN_CLAMP:
        raise NotConverged(
            f"restricted minimum {q_restricted:.6g} is below the unrestricted "
            f"minimum {q_unrestricted:.6g}")
    return max(t_n, 0.0)


test_statistic.__test__ = False


def test_linear(family: Family, basis: BasisSet, dataset: LongitudinalDataset,
                constraint: LinearConstraint, options: FitOptions = FitOptions(),
                init=None, multistart: bool = False) -> TestResult:
    """Test ``L^T beta = b`` by the difference of constrained and free QIF minima."""
    q = dataset.n_covariates
    _check_rank(constraint, q)
    full = fit(family, basis, dataset, init=init, options=options, multistart=multistart)
    if not full.converged:
        raise NotConverged("unrestricted fit did not converge")
    restricted = fit(family, basis, dataset, init=full.beta_hat, constraint=constraint,
                     options=options, multistart=multistart)
    if not restricted.converged:
        raise NotConverged("restricted fit did not converge")
    t_n = test_statistic(restricted.q_min, full.q_min)
    df = constraint.p
    return TestResult(t_n, df, chi2_sf(t_n, df), restricted.q_min, full.q_min, full, restricted)


test_linear.__test__ = False


def goodness_of_fit(fit_result: FitResult, r: Optional[int] = None,
                    q: Optional[int] = None) -> GofResult:
    """``Q_N`` at the unconstrained minimum against chi-squared with ``r - q`` df."""
    r = fit_result.r if r is None else r
    q = fit_result.beta_hat.shape[0] if q is None else q
    df = r - q
    if df < 1:
        raise DegenerateDf(f"r = {r} and q = {q} leave no degrees of freedom")
    return GofResult(fit_result.q_min, df, chi2_sf(max(fit_result.q_min, 0.0), df))


def _inverse_curvature(j_hat):
    j_hat = np.asarray(j_hat, dtype=float)
    evals = np.linalg.eigvalsh(j_hat)
    if not (np.all(np.isfinite(evals)) and evals[-1] > 0):
        raise SingularCurvature("J has no positive eigenvalue")
    if evals[0] < 1e-10 * evals[-1]:
        j_hat = j_hat + 1e-8 * np.trace(j_hat) / j_hat.shape[0] * np.eye(j_hat.shape[0])
        evals = np.linalg.eigvalsh(j_hat)
        if evals[0] <= 1e-16 * evals[-1]:
            raise SingularCurvature("J is singular after regularisation")
    return pinv_psd(j_hat, rel_cutoff=0.0)


def standard_errors(fit_result: FitResult, n_subjects: Optional[int] = None) -> np.ndarray:
    """``sqrt(diag(J^{-1}) / N)``."""
    N = fit_result.n_subjects if n_subjects is None else n_subjects
    jinv = _inverse_curvature(fit_result.j_hat_at_min)
    return np.sqrt(np.diag(jinv) / N)


def estimate_ncp(delta_beta, constraint: LinearConstraint, j_hat, n_subjects: int) -> float:
    """``N (L^T d)^T {L^T J^{-1} L}^{-1} (L^T d)`` for a parameter shift ``d``."""
    lmat = constraint.l
    ld = lmat.T @ np.asarray(delta_beta, dtype=float).reshape(-1)
    if not np.any(ld):
        return 0.0
    jinv = _inverse_curvature(j_hat)
    middle = lmat.T @ jinv @ lmat
    return float(n_subjects * ld @ np.linalg.solve(middle, ld))
