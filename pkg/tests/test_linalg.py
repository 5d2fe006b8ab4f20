import numpy as np
import pytest
from hypothesis import given, strategies as st

from qif import pinv_psd
from qif.errors import NotSymmetric
from qif.linalg import nullspace_basis


def test_identity():
    np.testing.assert_array_equal(pinv_psd(np.eye(3)), np.eye(3))


def test_rank_deficient_diagonal():
    np.testing.assert_allclose(pinv_psd(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-16)


def test_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        pinv_psd([[1.0, 0.5], [0.0, 1.0]])


def random_psd(rng, k, rank=None):
    a = rng.normal(size=(k, rank or k))
    return a @ a.T


@given(st.integers(0, 2**32 - 1))
def test_block_identity(seed):
    rng = np.random.default_rng(seed)
    c = random_psd(rng, 2)
    g = rng.normal(size=2)
    k = np.block([[c, c], [c, c]])
    gg = np.concatenate([g, g])
    lhs = gg @ pinv_psd(k) @ gg
    rhs = g @ np.linalg.solve(c, g)
    assert lhs == pytest.approx(rhs, rel=1e-8)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_moore_penrose_conditions(seed, k):
    rng = np.random.default_rng(seed)
    m = random_psd(rng, k, rank=int(rng.integers(1, k + 1)))
    p = pinv_psd(m)
    scale = np.abs(m).max()
    np.testing.assert_allclose(m @ p @ m, m, atol=1e-8 * scale)
    np.testing.assert_allclose(p @ m @ p, p, atol=1e-8 * np.abs(p).max())
    np.testing.assert_allclose(p, p.T, atol=1e-12 * np.abs(p).max())
    np.testing.assert_allclose(p, np.linalg.pinv(m, hermitian=True, rcond=1e-10),
                               atol=1e-6 * np.abs(p).max())


def test_batched_matches_loop():
    rng = np.random.default_rng(3)
    ms = np.stack([random_psd(rng, 3) for _ in range(5)])
    np.testing.assert_allclose(pinv_psd(ms), np.stack([pinv_psd(m) for m in ms]), rtol=1e-13)


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_nullspace_basis(seed, q):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, q + 1))
    lmat = rng.normal(size=(q, p))
    B, rank = nullspace_basis(lmat)
    assert rank == p and B.shape == (q, q - p)
    np.testing.assert_allclose(lmat.T @ B, 0.0, atol=1e-12)
    np.testing.assert_allclose(B.T @ B, np.eye(q - p), atol=1e-12)
