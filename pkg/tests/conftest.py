import pytest

from hapitrace.harness import bundled_model, bundled_registry, bundled_workload


@pytest.fixture(scope="session")
def model():
    return bundled_model()


@pytest.fixture(scope="session")
def registry():
    return bundled_registry()


@pytest.fixture(scope="session")
def w1():
    return bundled_workload("w1")


@pytest.fixture(scope="session")
def w2():
    return bundled_workload("w2")


@pytest.fixture(scope="session")
def w3():
    return bundled_workload("w3")
