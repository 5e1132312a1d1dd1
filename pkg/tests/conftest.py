import numpy as np
import pytest
import scipy.sparse as sp

from spag.data import SparseDataset, make_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, N, d, kind="logistic", density=1.0):
    X = sp.random(N, d, density=density, random_state=rng, format="csr") if density < 1 \
        else sp.csr_matrix(rng.standard_normal((N, d)))
    X = sp.diags(1.0 / np.maximum(np.sqrt(np.asarray(X.multiply(X).sum(1)).ravel()), 1.0)) @ X
    if kind == "logistic":
        y = np.where(rng.random(N) < 0.5, -1.0, 1.0)
    else:
        y = rng.standard_normal(N)
    return SparseDataset(X, y)


@pytest.fixture
def small_logistic(rng):
    return random_dataset(rng, 60, 8)


@pytest.fixture
def small_ridge(rng):
    return random_dataset(rng, 60, 8, kind="squared")


@pytest.fixture(scope="session")
def synth_logistic():
    return make_synthetic(20, 2000, "logistic", 0.9, seed=3)


@pytest.fixture(scope="session")
def synth_ridge():
    return make_synthetic(10, 1000, "squared", 0.9, seed=4)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
