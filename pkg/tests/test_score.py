import numpy as np
import pytest
from hypothesis import given, strategies as st

from qif import (BERNOULLI, GAUSSIAN, BasisSet, LongitudinalDataset, SubjectRecord, make_basis,
                 score_state, subject_score)

from conftest import ar1_gaussian_panel, random_instance


def test_subject_score_hand_value():
    basis = BasisSet(2, [np.eye(2), [[0, 1], [1, 0]]])
    g = subject_score(GAUSSIAN, basis, SubjectRecord("a", [1.0, 3.0], [[1.0, 1.0]]), [0.0])
    np.testing.assert_array_equal(g, [4.0, 4.0])


def test_zero_residual_gives_zero_score():
    x = np.array([[0.3, -1.0, 2.0]])
    mu = 1 / (1 + np.exp(-(x[0] * 0.7)))
    g = subject_score(BERNOULLI, make_basis("ar1", 3), SubjectRecord("a", mu, x), [0.7])
    np.testing.assert_allclose(g, 0.0, atol=1e-15)


def test_identity_basis_is_ols_score():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 4))
    y = rng.normal(size=4)
    beta = rng.normal(size=2)
    g = subject_score(GAUSSIAN, make_basis("identity", 4), SubjectRecord("a", y, x), beta)
    np.testing.assert_allclose(g, x @ (y - x.T @ beta), rtol=1e-14)


def test_hand_instance_at_zero(toy):
    st_ = score_state(GAUSSIAN, make_basis("identity", 1), toy, [0.0])
    assert st_.gbar[0] == pytest.approx(2.0, rel=1e-15)
    assert st_.c_hat[0, 0] == pytest.approx(14 / 3, rel=1e-15)
    assert st_.gbar_jac[0, 0] == pytest.approx(-1.0, rel=1e-15)
    assert st_.j_hat[0, 0] == pytest.approx(3 / 14, rel=1e-12)
    assert st_.r == 1


def test_hand_instance_at_mean(toy):
    st_ = score_state(GAUSSIAN, make_basis("identity", 1), toy, [2.0])
    assert st_.gbar[0] == 0.0
    assert st_.c_hat[0, 0] == pytest.approx(2 / 3, rel=1e-15)
    assert st_.j_hat[0, 0] == pytest.approx(1.5, rel=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from([GAUSSIAN, BERNOULLI]))
def test_duplication_invariance(seed, fam):
    ds, basis, beta = random_instance(np.random.default_rng(seed), fam)
    a = score_state(fam, basis, ds, beta)
    b = score_state(fam, basis, ds.duplicated(2), beta)
    np.testing.assert_allclose(b.gbar, a.gbar, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(b.c_hat, a.c_hat, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(b.j_hat, a.j_hat, rtol=1e-7, atol=1e-9 * np.abs(a.j_hat).max())


@given(st.integers(0, 2**32 - 1), st.sampled_from([GAUSSIAN, BERNOULLI]))
def test_c_hat_psd(seed, fam):
    ds, basis, beta = random_instance(np.random.default_rng(seed), fam)
    s = score_state(fam, basis, ds, beta)
    assert np.array_equal(s.c_hat, s.c_hat.T)
    assert np.linalg.eigvalsh(s.c_hat)[0] >= -1e-10 * np.trace(s.c_hat)
    assert np.linalg.eigvalsh(s.j_hat)[0] >= -1e-10 * max(np.trace(s.j_hat), 1e-300)
    assert s.r == ds.n_covariates * basis.s


@given(st.integers(0, 2**32 - 1), st.sampled_from([GAUSSIAN, BERNOULLI]))
def test_gbar_in_column_space_of_c_hat(seed, fam):
    ds, basis, beta = random_instance(np.random.default_rng(seed), fam)
    s = score_state(fam, basis, ds, beta, with_derivatives=False)
    coef = np.linalg.lstsq(s.c_hat, s.gbar, rcond=None)[0]
    np.testing.assert_allclose(s.c_hat @ coef, s.gbar, atol=1e-8 * (1 + np.abs(s.gbar).max()))


def _fd(f, beta, h):
    cols = [(f(beta + h * e) - f(beta - h * e)) / (2 * h) for e in np.eye(beta.size)]
    return np.stack(cols, axis=-1)


@given(st.integers(0, 2**32 - 1), st.sampled_from([GAUSSIAN, BERNOULLI]))
def test_gbar_jacobian_matches_fd(seed, fam):
    ds, basis, beta = random_instance(np.random.default_rng(seed), fam)
    s = score_state(fam, basis, ds, beta)
    fd = _fd(lambda b: score_state(fam, basis, ds, b, False).gbar, beta, 1e-5)
    scale = np.abs(fd).max() + 1e-12
    np.testing.assert_allclose(s.gbar_jac, fd, rtol=1e-6, atol=1e-6 * scale)


@given(st.integers(0, 2**32 - 1), st.sampled_from([GAUSSIAN, BERNOULLI]))
def test_c_hat_partials_match_fd(seed, fam):
    ds, basis, beta = random_instance(np.random.default_rng(seed), fam)
    s = score_state(fam, basis, ds, beta)
    fd = _fd(lambda b: score_state(fam, basis, ds, b, False).c_hat, beta, 1e-5)
    analytic = np.stack(s.c_hat_partials, axis=-1)
    scale = np.abs(fd).max() + 1e-12
    np.testing.assert_allclose(analytic, fd, rtol=1e-5, atol=1e-5 * scale)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_scale_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    fam = [GAUSSIAN, BERNOULLI][seed % 2]
    ds, basis, beta = random_instance(rng, fam, n=4, s=3, strict=True)
    a = score_state(fam, basis, ds, beta)
    b = score_state(fam, basis.scaled(c), ds, beta)
    np.testing.assert_allclose(b.gbar, c * a.gbar, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(b.c_hat, c * c * a.c_hat, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(b.j_hat, a.j_hat, rtol=1e-6, atol=1e-8 * np.abs(a.j_hat).max())


def test_gbar_shrinks_with_n():
    # E||gbar|| ~ N^{-1/2}: a 4x larger panel halves it on average, a 16x one quarters it
    basis = make_basis("ar1", 5)
    sizes = (1000, 4000, 16000)
    med = {}
    for N in sizes:
        norms = []
        for seed in range(41):
            ds = ar1_gaussian_panel(np.random.default_rng([seed, N]), N, beta=(0.3, -0.2))
            norms.append(np.linalg.norm(score_state(GAUSSIAN, basis, ds, [0.3, -0.2], False).gbar))
        med[N] = np.median(norms)
    assert med[4000] < 0.7 * med[1000]
    assert med[16000] < 0.5 * med[1000]


def test_basis_dimension_mismatch(toy):
    with pytest.raises(ValueError):
        score_state(GAUSSIAN, make_basis("ar1", 3), toy, [0.0])
