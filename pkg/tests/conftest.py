import pytest

from torusflow.metrics import gallery


@pytest.fixture(scope="session")
def flat():
    return gallery("flat")


@pytest.fixture(scope="session")
def bump():
    return gallery("conformal-bump")


@pytest.fixture(scope="session")
def liouville():
    return gallery("liouville")


@pytest.fixture(scope="session")
def twofreq():
    return gallery("two-frequency")
