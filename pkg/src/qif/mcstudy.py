"""Simulation of AR-1 correlated panels and the size/power harness.

Every replication draws from its own generator, seeded by
``SeedSequence(seed, spawn_key=(replication,))`` on PCG64.  Replications
are processed in fixed chunks of ``CHUNK`` through the batched IRGLS
solver, so a report is bitwise reproducible whatever the worker count.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .corrbasis import make_basis
from .distributions import chi2_quantile, noncentral_chi2_sf
from .errors import DomainError
from .model import get_family
from .solver import FitOptions, LinearConstraint, irgls_batch

CHUNK = 250


@dataclass(frozen=True)
class SimulationDesign:
    family_kind: str = "BernoulliLogit"
    n_subjects: int = 50
    n_times: int = 5
    rho: float = 0.2
    beta0: float = 0.0
    beta1: float = 0.0
    basis_label: str = "Identity"
    n_reps: int = 10_000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family_kind", get_family(self.family_kind).kind)
        object.__setattr__(self, "basis_label", make_basis(self.basis_label, self.n_times).label)
        if not 0.0 <= self.rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho}")
        if self.n_reps < 1 or self.n_subjects < 2 or self.n_times < 1:
            raise DomainError("need n_reps >= 1, n_subjects >= 2, n_times >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    def covariate(self) -> np.ndarray:
        N = self.n_subjects
        return -1.0 + 2.0 * np.arange(N) / (N - 1)

    def design_matrix(self) -> np.ndarray:
        """Intercept and subject-level covariate, shape (N, n, 2)."""
        x = self.covariate()
        ones = np.ones((self.n_subjects, self.n_times))
        return np.stack([ones, np.repeat(x[:, None], self.n_times, axis=1)], axis=-1)


@dataclass(frozen=True)
class StudyReport:
    rejection_rate: float
    mean_ncp_hat: float
    theoretical_power: float
    n_failed_fits: int
    monte_carlo_se: float
    rejections: int = 0
    n_reps: int = 0
    critical_value: float = float("nan")

    def as_csv_row(self, design: SimulationDesign | None = None, header: bool = True) -> str:
        values = {}
        if design is not None:
            values.update(asdict(design))
        values.update(asdict(self))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(values.keys())
        w.writerow([_fmt(v) for v in values.values()])
        return buf.getvalue()

    def as_text(self) -> str:
        return "\n".join(f"{f.name:>18s}  {_fmt(getattr(self, f.name))}" for f in fields(self)) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def replication_rng(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication,))))


def gen_binary_ar1(mu, rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary two-state Markov chain with lag-1 correlation ``rho``.

    ``mu`` may be a scalar or an array of subject means; the result has
    shape ``mu.shape + (n,)``.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any((mu <= 0) | (mu >= 1)) or not 0.0 <= rho < 1.0 or n < 1:
        raise DomainError("need 0 < mu < 1, 0 <= rho < 1, n >= 1")
    u = rng.random(mu.shape + (n,))
    y = np.empty(mu.shape + (n,))
    y[..., 0] = u[..., 0] < mu
    stay = rho + (1.0 - rho) * mu
    jump = (1.0 - rho) * mu
    for t in range(1, n):
        p1 = np.where(y[..., t - 1] == 1.0, stay, jump)
        y[..., t] = u[..., t] < p1
    return y


def gen_gaussian_ar1(rho: float, n: int, rng: np.random.Generator, size=()) -> np.ndarray:
    """Stationary Gaussian AR-1 series with unit marginal variance."""
    if not 0.0 <= rho < 1.0 or n < 1:
        raise DomainError("need 0 <= rho < 1 and n >= 1")
    size = tuple(np.atleast_1d(size)) if size != () else ()
    z = rng.standard_normal(size + (n,))
    eps = np.empty_like(z)
    eps[..., 0] = z[..., 0]
    scale = math.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        eps[..., t] = rho * eps[..., t - 1] + scale * z[..., t]
    return eps


def simulate_responses(design: SimulationDesign, rng: np.random.Generator) -> np.ndarray:
    """One replication's responses, shape (N, n)."""
    eta = design.beta0 + design.beta1 * design.covariate()
    if design.family_kind == "BernoulliLogit":
        return gen_binary_ar1(1.0 / (1.0 + np.exp(-eta)), design.rho, design.n_times, rng)
    eps = gen_gaussian_ar1(design.rho, design.n_times, rng, size=design.n_subjects)
    return eta[:, None] + eps


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------

def _batch_ncp(delta, lmat, j_hat, N):
    ld = lmat.T @ delta
    if not np.any(ld):
        return np.zeros(j_hat.shape[0])
    jinv = np.linalg.inv(j_hat)
    middle = lmat.T @ jinv @ lmat
    rhs = np.broadcast_to(ld, middle.shape[:-1])[..., None]
    return N * np.einsum("p,bp->b", ld, np.linalg.solve(middle, rhs)[..., 0])


def run_chunk(design: SimulationDesign, start: int, stop: int, options: FitOptions = FitOptions()):
    """Replications ``start..stop-1``: returns (T_N, reject, ncp_hat, failed) arrays."""
    family = get_family(design.family_kind)
    mats = make_basis(design.basis_label, design.n_times).stack()
    X = design.design_matrix()
    y = np.stack([simulate_responses(design, replication_rng(design.seed, k))
                  for k in range(start, stop)])
    R = y.shape[0]
    constraint = LinearConstraint([0.0, 1.0], [0.0])
    free = irgls_batch(family, mats, y, X, np.zeros((R, 2)), None, options)
    start_r = np.where(np.isfinite(free.beta), free.beta, 0.0)
    held = irgls_batch(family, mats, y, X, start_r, constraint, options)

    t_n = held.q_value - free.q_value
    failed = (~free.converged | ~held.converged | free.failed | held.failed
              | ~np.isfinite(t_n) | (t_n < -1e-6))
    t_n = np.where(failed, np.nan, np.maximum(t_n, 0.0))
    crit = chi2_quantile(1.0 - design.alpha, 1)
    reject = ~failed & (t_n > crit)

    ncp = np.zeros(R)
    jh = free.j_hat
    usable = ~failed & np.all(np.isfinite(jh), axis=(1, 2))
    if np.any(usable):
        jh_ok = jh[usable]
        evals = np.linalg.eigvalsh(jh_ok)
        good = evals[:, 0] > 1e-12 * evals[:, -1]
        idx = np.flatnonzero(usable)
        failed[idx[~good]] = True
        reject[idx[~good]] = False
        if np.any(good):
            delta = np.array([0.0, design.beta1])
            ncp[idx[good]] = _batch_ncp(delta, constraint.l, jh_ok[good], design.n_subjects)
    ncp[failed] = np.nan
    return t_n, reject, ncp, failed


def _run_chunk_args(args):
    return run_chunk(*args)


def simulate(design: SimulationDesign, workers: int = 1, options: FitOptions = FitOptions()):
    """Per-replication arrays ``(T_N, reject, ncp_hat, failed)`` in replication order."""
    bounds = [(a, min(a + CHUNK, design.n_reps)) for a in range(0, design.n_reps, CHUNK)]
    jobs = [(design, a, b, options) for a, b in bounds]
    if workers <= 1 or len(jobs) == 1:
        parts = [run_chunk(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk_args, jobs))
    return tuple(np.concatenate(col) for col in zip(*parts))


def run_study(design: SimulationDesign, workers: int = 1,
              options: FitOptions = FitOptions()) -> StudyReport:
    _, reject, ncp, failed = simulate(design, workers, options)
    n_failed = int(failed.sum())
    used = design.n_reps - n_failed
    rejections = int(reject.sum())
    rate = rejections / used if used else float("nan")
    mean_ncp = math.fsum(ncp[~failed].tolist()) / used if used else float("nan")
    crit = chi2_quantile(1.0 - design.alpha, 1)
    theo = noncentral_chi2_sf(crit, 1, mean_ncp) if used else float("nan")
    se = math.sqrt(rate * (1.0 - rate) / used) if used else float("nan")
    return StudyReport(rate, mean_ncp, theo, n_failed, se, rejections, design.n_reps, crit)


# ---------------------------------------------------------------------------
# the standard 50 x 5 design grid
# ---------------------------------------------------------------------------

FAMILIES = ("BernoulliLogit", "GaussianIdentity")
RHOS = (0.2, 0.5, 0.8)
BASES = ("Identity", "AR1", "AR2")

# Published values for the grid, keyed by (family, rho, basis).
_SIZE = {
    "BernoulliLogit": [(0.048, 0.048, 0.048), (0.050, 0.049, 0.049), (0.047, 0.050, 0.048)],
    "GaussianIdentity": [(0.050, 0.047, 0.048), (0.044, 0.046, 0.044), (0.052, 0.050, 0.051)],
}
_POWER = {
    "BernoulliLogit": [(0.473, 0.463, 0.447), (0.325, 0.327, 0.322), (0.226, 0.228, 0.227)],
    "GaussianIdentity": [(0.968, 0.954, 0.933), (0.843, 0.822, 0.795), (0.644, 0.633, 0.601)],
}
_NCP = {
    "BernoulliLogit": [(4.122, 4.286, 4.437), (2.452, 2.609, 2.678), (1.431, 1.515, 1.517)],
    "GaussianIdentity": [(17.982, 19.263, 20.478), (11.067, 12.189, 12.961), (6.837, 7.582, 8.071)],
}
_THEORETICAL = {
    "BernoulliLogit": [(0.528, 0.544, 0.558), (0.347, 0.365, 0.373), (0.223, 0.234, 0.234)],
    "GaussianIdentity": [(0.989, 0.992, 0.995), (0.914, 0.937, 0.950), (0.744, 0.786, 0.811)],
}


def _flatten(table):
    return {(fam, rho, basis): table[fam][i][j]
            for fam in FAMILIES for i, rho in enumerate(RHOS) for j, basis in enumerate(BASES)}


REFERENCE_SIZE = _flatten(_SIZE)
REFERENCE_POWER = _flatten(_POWER)
REFERENCE_NCP = _flatten(_NCP)
REFERENCE_THEORETICAL_POWER = _flatten(_THEORETICAL)


def grid_designs(truth: str, n_reps: int = 10_000, seed: int = 0):
    """The 18 (family, rho, basis) designs under ``truth`` in {'h0', 'h1'}.

    Cell ``k`` (in family, rho, basis order) gets seed ``seed + k`` under
    H0 and ``seed + 18 + k`` under H1, so the two tables never share streams.
    """
    truth = truth.lower()
    beta1 = {"h0": 0.0, "h1": 0.5}[truth]
    offset = 0 if truth == "h0" else 18
    base = SimulationDesign(n_reps=n_reps, beta1=beta1)
    keys = [(fam, rho, basis) for fam in FAMILIES for rho in RHOS for basis in BASES]
    return {key: replace(base, family_kind=key[0], rho=key[1], basis_label=key[2],
                         seed=seed + offset + k)
            for k, key in enumerate(keys)}
