from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from microlam.hulls_and_wells import named_matrix

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def t3():
    """Float T3 wells and auxiliary matrices keyed by name."""
    return {k: named_matrix(k) for k in ("A1", "A2", "A3", "S1", "S2", "S3")}


@pytest.fixture(scope="session")
def r_one():
    return (Fraction(1, 4),)


@pytest.fixture(scope="session")
def r_two():
    return (Fraction(1, 4), Fraction(1, 16))
