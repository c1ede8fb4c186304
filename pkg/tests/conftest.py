import numpy as np
import pytest

from centralvr import data
from centralvr.problems import Problem


def tiny(kind, rows, labels, lam=0.0):
    hint = "classification" if kind == "logistic" else "regression"
    return Problem(kind, data.Dataset(np.array(rows, dtype=float), np.array(labels, dtype=float), hint), lam)


@pytest.fixture(scope="session")
def toy_ridge():
    ds, _ = data.generate_regression(100, 5, 11)
    return Problem("ridge", ds, 1e-4)


@pytest.fixture(scope="session")
def toy_logistic():
    return Problem("logistic", data.generate_classification(200, 5, 12), 1e-4)
