import pytest

from facefit import make_toy_model


@pytest.fixture(scope="session")
def toy_model():
    return make_toy_model(7, 16, 8, 6, 8, 5)
