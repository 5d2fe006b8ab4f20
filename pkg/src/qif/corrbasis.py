"""Basis matrices for the inverse working correlation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedDimension

LABELS = ("Identity", "Exchangeable", "AR1", "AR2", "Custom")


@dataclass(frozen=True)
class BasisSet:
    n: int
    matrices: tuple
    label: str = "Custom"

    def __post_init__(self):
        mats = tuple(np.array(m, dtype=float) for m in self.matrices)
        if not mats:
            raise ValueError("basis needs at least one matrix")
        for m in mats:
            if m.shape != (self.n, self.n):
                raise ValueError(f"basis matrix has shape {m.shape}, expected {(self.n, self.n)}")
            if not np.all(np.isfinite(m)) or not np.array_equal(m, m.T):
                raise ValueError("basis matrices must be finite and symmetric")
            m.setflags(write=False)
        if not np.array_equal(mats[0], np.eye(self.n)):
            raise ValueError("first basis matrix must be the identity")
        if self.label not in LABELS:
            raise ValueError(f"unknown basis label {self.label!r}")
        object.__setattr__(self, "matrices", mats)

    @property
    def s(self) -> int:
        return len(self.matrices)

    def stack(self) -> np.ndarray:
        """All matrices as one ``(s, n, n)`` array."""
        return np.stack(self.matrices)

    def scaled(self, c: float) -> "BasisSet":
        # only for invariance checks; the leading matrix stops being I
        return _UncheckedBasis(self.n, tuple(c * m for m in self.matrices), self.label)

    def with_extra(self, m) -> "BasisSet":
        return BasisSet(self.n, self.matrices + (np.asarray(m, dtype=float),), "Custom")


class _UncheckedBasis(BasisSet):
    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(np.array(m, dtype=float) for m in self.matrices))


def _off_diagonal(n: int, k: int) -> np.ndarray:
    m = np.zeros((n, n))
    idx = np.arange(n - k)
    m[idx, idx + k] = 1.0
    m[idx + k, idx] = 1.0
    return m


def make_basis(label: str, n: int) -> BasisSet:
    """Standard basis sets.

    ``AR1`` pairs the identity with the tridiagonal 0/1 matrix; ``AR2`` adds
    the symmetric second off-diagonal.  The (1,1)/(n,n) boundary correction
    is not included (build it with ``BasisSet`` if wanted).
    """
    key = str(label).lower().replace("-", "").replace("_", "")
    if n < 1:
        raise UnsupportedDimension("n must be positive")
    eye = np.eye(n)
    if key == "identity":
        return BasisSet(n, (eye,), "Identity")
    if key == "exchangeable":
        return BasisSet(n, (eye, np.ones((n, n))), "Exchangeable")
    if key == "ar1":
        return BasisSet(n, (eye, _off_diagonal(n, 1)), "AR1")
    if key == "ar2":
        if n < 3:
            raise UnsupportedDimension("AR2 basis needs n >= 3")
        return BasisSet(n, (eye, _off_diagonal(n, 1), _off_diagonal(n, 2)), "AR2")
    raise ValueError(f"unknown basis {label!r}")


def read_basis(path) -> BasisSet:
    """Read a custom basis file: ``n s`` then ``s`` blocks of ``n`` rows.

    The identity is prepended when the first block is not already ``I``.
    """
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'n s' header")
    n, s = int(tokens[0]), int(tokens[1])
    vals = np.array([float(t) for t in tokens[2:]])
    if vals.size != s * n * n:
        raise ValueError(f"{path}: expected {s * n * n} matrix entries, got {vals.size}")
    mats = list(vals.reshape(s, n, n))
    if not np.array_equal(mats[0], np.eye(n)):
        mats.insert(0, np.eye(n))
    return BasisSet(n, tuple(mats), "Custom")
