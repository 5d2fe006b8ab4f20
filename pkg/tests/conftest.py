import pathlib

import numpy as np
import pytest
from hypothesis import settings

from qif import BERNOULLI, GAUSSIAN, LongitudinalDataset, make_basis, qif_value, score_state

settings.register_profile("qif", max_examples=40, deadline=None)
settings.load_profile("qif")

DATA = pathlib.Path(__file__).parent / "data"


def random_basis(rng, n, s):
    """Identity plus up to two structured matrices, s in {1, 2, 3}."""
    if s == 1:
        return make_basis("identity", n)
    if s == 2 or n < 3:
        return make_basis("ar1" if rng.random() < 0.5 else "exchangeable", n)
    return make_basis("ar2", n)


def well_posed(family, basis, dataset, beta):
    """True unless Q_N is numerically ambiguous at ``beta``.

    Rejects a spectrum of C with eigenvalues between the exact-zero level
    and 1e-5 of the largest (Q's rounding noise is eps * cond(C) * Q) and
    saturated instances with Q_N = N identically.
    """
    c = score_state(family, basis, dataset, beta, False).c_hat
    ev = np.linalg.eigvalsh(c)
    rel = ev / ev[-1]
    if np.any((rel > 1e-13) & (rel < 1e-5)):
        return False
    q = qif_value(family, basis, dataset, beta, False).q_value
    return q < dataset.n_subjects * (1 - 1e-6)


def random_instance(rng, family, N=None, n=None, q=None, s=None, eta_max=3.0, strict=False):
    """Random dataset, basis and beta with |eta| <= eta_max.

    N is drawn from [r + 2, 20]: with N <= r the subject scores span R^r
    and Q_N is identically N.  With ``strict`` the draw is repeated until
    it is ``well_posed``.
    """
    while True:
        inst = _draw(rng, family, N, n, q, s, eta_max)
        if not strict or well_posed(family, inst[1], inst[0], inst[2]):
            return inst


def _draw(rng, family, N, n, q, s, eta_max):
    n = n or int(rng.integers(1, 6))
    q = q or int(rng.integers(1, 4))
    s = s or int(rng.integers(1, 4))
    if n < 2:
        s = 1
    if s == 3 and n < 3:
        s = 2
    N = N or int(rng.integers(max(6, q * s + 2), 21))
    X = rng.uniform(-1, 1, size=(N, n, q))
    X[..., 0] = 1.0
    beta = rng.uniform(-1, 1, size=q)
    eta = X @ beta
    beta *= min(1.0, eta_max / max(np.max(np.abs(eta)), 1e-12))
    if family is GAUSSIAN:
        y = X @ beta + rng.normal(size=(N, n))
    else:
        mu = 1 / (1 + np.exp(-(X @ beta)))
        y = (rng.random((N, n)) < mu).astype(float)
    return LongitudinalDataset.from_arrays(y, X), random_basis(rng, n, s), beta


@pytest.fixture
def toy():
    """Three subjects, n = q = s = 1, y = (1, 2, 3), x = 1."""
    return LongitudinalDataset.from_arrays([[1.0], [2.0], [3.0]], np.ones((3, 1, 1)))


@pytest.fixture(params=[GAUSSIAN, BERNOULLI], ids=["gaussian", "bernoulli"])
def family(request):
    return request.param


def ar1_gaussian_panel(rng, N, n=5, rho=0.5, beta=(0.0, 0.0)):
    """Subject-level covariate on [-1, 1] plus intercept, AR-1 errors."""
    x = np.linspace(-1, 1, N)
    X = np.stack([np.ones((N, n)), np.repeat(x[:, None], n, 1)], -1)
    eps = np.empty((N, n))
    z = rng.normal(size=(N, n))
    eps[:, 0] = z[:, 0]
    for t in range(1, n):
        eps[:, t] = rho * eps[:, t - 1] + np.sqrt(1 - rho**2) * z[:, t]
    y = X @ np.asarray(beta) + eps
    return LongitudinalDataset.from_arrays(y, X)


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion, printed after the test summary
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail, status=None):
    status = status or ("PASS" if passed else "FAIL")
    line = f"{status}  criterion {number:>2d}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
