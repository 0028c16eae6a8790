import numpy as np
import pytest

import swingby as sw

MU_SUN = 1.32712440018e11
AU_KM = 1.495978707e8


@pytest.fixture(scope="session")
def catalog():
    return sw.default_catalog()


@pytest.fixture(scope="session")
def frozen_catalog(catalog):
    """Catalog copy with secular rates zeroed: pure two-body motion."""
    return catalog.with_zero_rates()


@pytest.fixture(scope="session")
def cassini(catalog):
    return sw.load_problem("cassini", catalog=catalog)


@pytest.fixture(scope="session")
def earth_mars(catalog):
    return sw.load_problem("earth_mars", catalog=catalog)


def sphere(ys):
    return np.sum(ys * ys, axis=1)


def rastrigin(ys):
    n = ys.shape[1]
    return 10.0 * n + np.sum(ys * ys - 10.0 * np.cos(2.0 * np.pi * ys),
                             axis=1)
