import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qif import (BERNOULLI, GAUSSIAN, LongitudinalDataset, SubjectRecord, evaluate_subject,
                 load_dataset, read_csv)
from qif.errors import NonFiniteInput, RaggedCovariates, UnbalancedPanel


def test_gaussian_at_zero():
    sub = SubjectRecord("a", [0.3, -2.0], [[1.0, 1.0]])
    ev = evaluate_subject(GAUSSIAN, sub, [0.0])
    np.testing.assert_array_equal(ev.h_i, [0, 0])
    np.testing.assert_array_equal(ev.grad_h_i, [[1], [1]])
    np.testing.assert_array_equal(ev.a_inv_sqrt_i, np.eye(2))


def test_logit_at_zero():
    sub = SubjectRecord("a", [0, 1, 1], [[0.4, -1.0, 2.0]])
    ev = evaluate_subject(BERNOULLI, sub, [0.0])
    np.testing.assert_allclose(ev.h_i, 0.5)
    np.testing.assert_allclose(np.diag(ev.a_inv_sqrt_i), 2.0)


def test_logit_scalar_hand_value():
    ev = evaluate_subject(BERNOULLI, SubjectRecord("a", [1], [[2.0]]), [0.5])
    mu = math.e / (1 + math.e)
    assert ev.h_i[0] == pytest.approx(0.731059, abs=1e-6)
    assert ev.h_i[0] == pytest.approx(mu, rel=1e-15)
    assert ev.grad_h_i[0, 0] == pytest.approx(0.393224, abs=1e-6)
    # (mu (1 - mu))^{-1/2} at eta = 1
    assert ev.a_inv_sqrt_i[0, 0] == pytest.approx(2.2552519, abs=1e-6)
    assert ev.a_inv_sqrt_i[0, 0] == pytest.approx((mu * (1 - mu)) ** -0.5, rel=1e-14)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_gaussian_eval_is_beta_free(b1, b2):
    sub = SubjectRecord("a", [1.0, 2.0], [[1.0, 1.0], [0.5, -0.5]])
    ev1 = evaluate_subject(GAUSSIAN, sub, [b1, b2])
    ev0 = evaluate_subject(GAUSSIAN, sub, [0.0, 0.0])
    np.testing.assert_array_equal(ev1.grad_h_i, ev0.grad_h_i)
    np.testing.assert_array_equal(ev1.a_inv_sqrt_i, ev0.a_inv_sqrt_i)


@given(st.floats(-8, 8))
def test_logit_weights_at_least_two(eta):
    ev = evaluate_subject(BERNOULLI, SubjectRecord("a", [1], [[1.0]]), [eta])
    d = ev.a_inv_sqrt_i[0, 0]
    assert d >= 2.0
    if abs(eta) > 1e-6:  # below this d - 2 = eta^2 / 4 is lost to rounding
        assert d > 2.0


def test_logit_weight_equals_two_at_zero():
    ev = evaluate_subject(BERNOULLI, SubjectRecord("a", [1], [[1.0]]), [0.0])
    assert ev.a_inv_sqrt_i[0, 0] == 2.0


@given(st.integers(0, 2**32 - 1))
def test_grad_h_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, q = 4, 3
    x = rng.uniform(-1, 1, size=(q, n))
    beta = rng.uniform(-1, 1, size=q)
    beta *= min(1.0, 5.0 / np.max(np.abs(x.T @ beta)))
    sub = SubjectRecord("a", np.ones(n), x)
    for fam in (GAUSSIAN, BERNOULLI):
        ev = evaluate_subject(fam, sub, beta)
        h = 1e-6
        fd = np.stack([(evaluate_subject(fam, sub, beta + h * e).h_i
                        - evaluate_subject(fam, sub, beta - h * e).h_i) / (2 * h)
                       for e in np.eye(q)], axis=1)
        np.testing.assert_allclose(ev.grad_h_i, fd, rtol=1e-6, atol=1e-9)


def test_nonfinite_beta_rejected():
    with pytest.raises(NonFiniteInput):
        evaluate_subject(GAUSSIAN, SubjectRecord("a", [1.0], [[1.0]]), [np.nan])


def test_degenerate_variance_rejected():
    # eta = 40 is clamped to 30 where mu(1 - mu) < 1e-12
    with pytest.raises(NonFiniteInput):
        evaluate_subject(BERNOULLI, SubjectRecord("a", [1.0], [[1.0]]), [40.0])


def test_subject_rejects_nonfinite():
    with pytest.raises(NonFiniteInput):
        SubjectRecord("a", [1.0, np.inf], [[1.0, 1.0]])


def test_load_minimal():
    rows = [("s1", 1, 0.5, 1.0), ("s1", 2, 0.1, 1.0), ("s2", 1, 0.2, 1.0), ("s2", 2, 0.3, 1.0)]
    ds = load_dataset(rows)
    assert (ds.n_subjects, ds.n_times, ds.n_covariates) == (2, 2, 1)
    assert [s.id for s in ds.subjects] == ["s1", "s2"]
    np.testing.assert_array_equal(ds.y, [[0.5, 0.1], [0.2, 0.3]])


def test_load_duplicate_time():
    rows = [("s1", 1, 0.0, 1.0), ("s1", 1, 0.0, 1.0), ("s1", 2, 0.0, 1.0)]
    with pytest.raises(UnbalancedPanel):
        load_dataset(rows)


def test_load_missing_time():
    rows = [("s1", 1, 0.0, 1.0), ("s1", 2, 0.0, 1.0), ("s2", 1, 0.0, 1.0)]
    with pytest.raises(UnbalancedPanel):
        load_dataset(rows)


def test_load_ragged():
    rows = [("s1", 1, 0.0, 1.0, 2.0), ("s2", 1, 0.0, 1.0, 2.0, 3.0)]
    with pytest.raises(RaggedCovariates):
        load_dataset(rows)


def test_read_csv_skips_comments(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("# comment\nsubject,time,y,int,age\n# more\n1,1,0,1,-1\n1,2,1,1,0\n2,1,1,1,-1\n2,2,1,1,0\n")
    ds = read_csv(p)
    assert ds.covariate_names == ("int", "age")
    assert ds.X.shape == (2, 2, 2)
    np.testing.assert_array_equal(ds.X[0, :, 1], [-1, 0])


def test_read_csv_names_bad_line(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("subject,time,y,x1\n1,1,0,1\n# c\n1,2,oops,1\n")
    with pytest.raises(ValueError, match=r"d\.csv:4"):
        read_csv(p)


def test_duplicate_ids_rejected():
    s = SubjectRecord("a", [1.0], [[1.0]])
    with pytest.raises(ValueError):
        LongitudinalDataset((s, s))
