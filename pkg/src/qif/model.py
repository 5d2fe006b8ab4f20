"""Longitudinal data containers and GLM families.

Responses for subject ``i`` are a length-``n`` vector ``y`` and the
covariates a ``q x n`` matrix ``x`` whose column ``t`` is the covariate
vector at time ``t``.  Internally the stacked design is kept time-major,
with shape ``(N, n, q)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import NonFiniteInput, RaggedCovariates, UnbalancedPanel

ETA_CLAMP = 30.0
VARIANCE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

def _expit(eta):
    eta = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
    return 1.0 / (1.0 + np.exp(-eta))


def _expit_prime(eta):
    mu = _expit(eta)
    return mu * (1.0 - mu)


def _expit_second(eta):
    mu = _expit(eta)
    return mu * (1.0 - mu) * (1.0 - 2.0 * mu)


@dataclass(frozen=True)
class Family:
    """Inverse link, its first two derivatives and the variance function.

    All callables act elementwise on numpy arrays.  ``v_prime`` is dv/dmu,
    needed for the exact derivative of the ``A^{-1/2}`` weights.
    """

    kind: str
    h: Callable
    h_prime: Callable
    h_second: Callable
    v: Callable
    v_prime: Callable

    def __repr__(self):
        return f"Family({self.kind})"

    def link_terms(self, eta):
        """Return ``(mu, h', h'', w, dw/deta)`` with ``w = v(mu)^{-1/2}``.

        No validation is done here; callers check finiteness and the
        variance floor.
        """
        mu = self.h(eta)
        d1 = self.h_prime(eta)
        d2 = self.h_second(eta)
        var = self.v(mu)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = 1.0 / np.sqrt(var)
            dw = -0.5 * w / var * self.v_prime(mu) * d1
        return mu, d1, d2, w, dw, var


GAUSSIAN = Family(
    kind="GaussianIdentity",
    h=lambda eta: np.asarray(eta, dtype=float) * 1.0,
    h_prime=lambda eta: np.ones_like(eta, dtype=float),
    h_second=lambda eta: np.zeros_like(eta, dtype=float),
    v=lambda mu: np.ones_like(mu, dtype=float),
    v_prime=lambda mu: np.zeros_like(mu, dtype=float),
)

BERNOULLI = Family(
    kind="BernoulliLogit",
    h=_expit,
    h_prime=_expit_prime,
    h_second=_expit_second,
    v=lambda mu: mu * (1.0 - mu),
    v_prime=lambda mu: 1.0 - 2.0 * mu,
)

_FAMILY_ALIASES = {
    "gaussian": GAUSSIAN,
    "gaussianidentity": GAUSSIAN,
    "normal": GAUSSIAN,
    "bernoulli": BERNOULLI,
    "bernoullilogit": BERNOULLI,
    "binomial": BERNOULLI,
    "logistic": BERNOULLI,
    "logit": BERNOULLI,
}


def get_family(name) -> Family:
    if isinstance(name, Family):
        return name
    try:
        return _FAMILY_ALIASES[str(name).lower().replace("_", "").replace("-", "")]
    except KeyError:
        raise ValueError(f"unknown family {name!r}") from None


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubjectRecord:
    id: Hashable
    y: np.ndarray
    x: np.ndarray  # (q, n)

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != y.shape[0]:
            raise RaggedCovariates(
                f"subject {self.id!r}: covariate matrix {x.shape} does not match "
                f"{y.shape[0]} responses")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise NonFiniteInput(f"subject {self.id!r} has non-finite entries")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class LongitudinalDataset:
    """Balanced panel of ``N`` subjects, ``n`` times and ``q`` covariates."""

    subjects: tuple
    covariate_names: tuple = ()
    n_times: int = field(init=False)
    n_covariates: int = field(init=False)

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if not subjects:
            raise ValueError("dataset needs at least one subject")
        ids = [s.id for s in subjects]
        if len(set(ids)) != len(ids):
            raise ValueError("subject identifiers must be unique")
        n = subjects[0].y.shape[0]
        q = subjects[0].x.shape[0]
        if n < 1 or q < 1:
            raise ValueError("need n >= 1 and q >= 1")
        for s in subjects:
            if s.y.shape[0] != n:
                raise UnbalancedPanel(f"subject {s.id!r} has {s.y.shape[0]} responses, expected {n}")
            if s.x.shape[0] != q:
                raise RaggedCovariates(f"subject {s.id!r} has {s.x.shape[0]} covariates, expected {q}")
        names = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(q))
        if len(names) != q:
            raise ValueError("covariate_names must have length q")
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "n_times", n)
        object.__setattr__(self, "n_covariates", q)
        y = np.stack([s.y for s in subjects])
        X = np.stack([s.x.T for s in subjects])
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "_y", y)
        object.__setattr__(self, "_X", X)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def y(self) -> np.ndarray:
        """Responses, shape ``(N, n)``."""
        return self._y

    @property
    def X(self) -> np.ndarray:
        """Time-major design, shape ``(N, n, q)``."""
        return self._X

    @classmethod
    def from_arrays(cls, y, X, ids=None, covariate_names=()):
        """Build from ``y`` of shape (N, n) and ``X`` of shape (N, n, q)."""
        y = np.asarray(y, dtype=float)
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[..., None]
        if ids is None:
            ids = range(1, y.shape[0] + 1)
        subjects = [SubjectRecord(i, yi, Xi.T) for i, yi, Xi in zip(ids, y, X)]
        return cls(tuple(subjects), tuple(covariate_names))

    def duplicated(self, times: int = 2) -> "LongitudinalDataset":
        subs = [SubjectRecord((k, s.id), s.y, s.x) for k in range(times) for s in self.subjects]
        return LongitudinalDataset(tuple(subs), self.covariate_names)


def check_responses(family: Family, dataset: LongitudinalDataset) -> None:
    if family.kind == "BernoulliLogit" and not np.all((dataset.y == 0) | (dataset.y == 1)):
        raise ValueError("Bernoulli responses must be 0 or 1")


# ---------------------------------------------------------------------------
# Per-subject evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubjectModelEval:
    h_i: np.ndarray           # (n,)
    grad_h_i: np.ndarray      # (n, q)
    a_inv_sqrt_i: np.ndarray  # (n, n) diagonal


def evaluate_subject(family: Family, subject: SubjectRecord, beta) -> SubjectModelEval:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if not np.all(np.isfinite(beta)):
        raise NonFiniteInput("beta has non-finite entries")
    Xt = subject.x.T
    eta = Xt @ beta
    if not np.all(np.isfinite(eta)):
        raise NonFiniteInput("non-finite linear predictor")
    mu, d1, _, w, _, var = family.link_terms(eta)
    if not np.all(np.isfinite(var)) or np.any(var < VARIANCE_FLOOR):
        raise NonFiniteInput("variance function degenerate at current beta")
    return SubjectModelEval(h_i=mu, grad_h_i=d1[:, None] * Xt, a_inv_sqrt_i=np.diag(w))


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def load_dataset(rows: Iterable[Sequence], covariate_names: Sequence[str] = ()) -> LongitudinalDataset:
    """Assemble a balanced panel from long-format ``(subject, time, y, x1..xq)`` rows.

    ``time`` is a 1-based integer.  Subjects are ordered by first appearance.
    """
    order: list = []
    records: dict = {}
    q = None
    for lineno, row in enumerate(rows, start=1):
        if len(row) < 4:
            raise RaggedCovariates(f"row {lineno}: need subject, time, y and at least one covariate")
        sid, t, yv, *xs = row
        if q is None:
            q = len(xs)
        elif len(xs) != q:
            raise RaggedCovariates(f"row {lineno}: {len(xs)} covariates, expected {q}")
        t = int(t)
        vals = [float(yv)] + [float(v) for v in xs]
        if not all(math.isfinite(v) for v in vals):
            raise NonFiniteInput(f"row {lineno}: non-finite value")
        if sid not in records:
            records[sid] = {}
            order.append(sid)
        if t in records[sid]:
            raise UnbalancedPanel(f"row {lineno}: subject {sid!r} repeats time {t}")
        records[sid][t] = vals
    if not order:
        raise ValueError("no data rows")
    n = max(len(r) for r in records.values())
    subjects = []
    for sid in order:
        times = records[sid]
        if sorted(times) != list(range(1, n + 1)):
            raise UnbalancedPanel(
                f"subject {sid!r} has times {sorted(times)}, expected 1..{n}")
        block = np.array([times[t] for t in range(1, n + 1)])
        subjects.append(SubjectRecord(sid, block[:, 0], block[:, 1:].T))
    return LongitudinalDataset(tuple(subjects), tuple(covariate_names))


class _NumberedLines:
    """Yield non-comment lines while remembering their physical line numbers."""

    def __init__(self, fh):
        self.fh = fh
        self.lineno = 0

    def __iter__(self):
        for line in self.fh:
            self.lineno += 1
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            yield line


def read_csv(path) -> LongitudinalDataset:
    """Read a long-format CSV with header ``subject,time,y,x1,...,xq``.

    Lines starting with ``#`` are ignored.  Errors name the offending line.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        lines = _NumberedLines(fh)
        reader = csv.reader(lines)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 4 or [h.lower() for h in header[:3]] != ["subject", "time", "y"]:
            raise ValueError(f"{path}:{lines.lineno}: header must be subject,time,y,x1,...")
        names = header[3:]
        rows = []
        for rec in reader:
            where = f"{path}:{lines.lineno}"
            if len(rec) != len(header):
                raise RaggedCovariates(f"{where}: expected {len(header)} fields, got {len(rec)}")
            try:
                sid = rec[0].strip()
                t = int(rec[1])
                vals = [float(v) for v in rec[2:]]
            except ValueError as exc:
                raise ValueError(f"{where}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise NonFiniteInput(f"{where}: non-finite value")
            rows.append((sid, t, *vals))
    return load_dataset(rows, names)
