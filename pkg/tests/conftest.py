import numpy as np
import pytest

from llmad.backends import MockOracleBackend


@pytest.fixture
def mock_backend():
    return MockOracleBackend()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
