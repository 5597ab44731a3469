import pytest

from rectabs.dsl import Primitive, Scene
from rectabs.objective import ObjectiveConfig, match_primitives
from rectabs.rewrites import standard_library


@pytest.fixture
def cfg():
    return ObjectiveConfig()


@pytest.fixture
def lib():
    return standard_library()


def approx_match(out, target, tol=1e-9):
    """Exact-up-to-float-noise multiset equality via optimal assignment."""
    if len(out) != len(target):
        return False
    return match_primitives(out, list(target), tol, require_square=True) is not None


@pytest.fixture
def exact():
    return approx_match
