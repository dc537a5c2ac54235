import numpy as np
import pytest

from operator_core import OperatorParams, SpaceParams


def make_params(dim_x=0, alpha1=0.0, alpha2=None, Q=None, q=None, gamma=1.0, d=None, c=0.0, b=0.0):
    n = dim_x
    return OperatorParams(
        dim_x=n,
        alpha1=alpha1,
        alpha2=alpha1 if alpha2 is None else alpha2,
        Q=np.eye(n) if Q is None else Q,
        q=np.zeros(n) if q is None else q,
        gamma=gamma,
        d=np.zeros(n) if d is None else d,
        c=c,
        b=b,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def params_factory():
    return make_params


@pytest.fixture
def l2():
    return SpaceParams(p=2.0, m=0.0)


@pytest.fixture
def potential_params():
    """gamma = 1, c = 0, b = 3/4: indicial roots -3/2 and 1/2."""
    return make_params(b=0.75)
