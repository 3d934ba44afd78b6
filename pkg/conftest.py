"""Fixtures compartidas por las pruebas"""

import numpy as np
import pytest

from src.adapters.kernel_adapter import KernelFactory
from src.core.domain import Sample
from src.infrastructure.density_adapter import JointDensityModel
from src.services import datagen_service


@pytest.fixture
def gaussian():
    return KernelFactory.create_kernel("gaussian")


@pytest.fixture(scope="session")
def fig1_spec():
    return datagen_service.fig1_spec()


@pytest.fixture(scope="session")
def fig1_sample(fig1_spec):
    return datagen_service.generate(fig1_spec, 1000, seed=1)


@pytest.fixture(scope="session")
def fig1_model(fig1_sample):
    k = KernelFactory.create_kernel("gaussian")
    return JointDensityModel.standard(fig1_sample, k, k, 0.08, 0.2)


@pytest.fixture(scope="session")
def outlier_sample():
    return datagen_service.generate(datagen_service.outliers_spec(), 200, seed=3)


@pytest.fixture
def three_points():
    return Sample([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])


@pytest.fixture
def linear_sample():
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 1, 300)
    return Sample(x, x + 0.05 * rng.standard_normal(300))
