import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ltv_pc.costs import quadratic_family
from ltv_pc.system import InstanceSpec, LtvSystem, ball_samples, generate_instance

settings.register_profile(
    "ltv", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ltv")


def small_instance(seed, n=2, m=2, T=20, family="random_stable", **kw):
    return generate_instance(InstanceSpec(family, n, m, T, **kw), seed)


def scalar_instance(seed, T, a=(0.02, 0.05), b=(1.40, 1.414), D=1.0):
    """Scalar system with small ``A_t`` and ``B_t`` near ``sqrt(2)``.

    Keeps the closed-form constants as small as they get (``C`` in the
    thousands, ``lambda`` near 0.978), so that the window thresholds stay
    around a thousand steps.
    """
    rng = np.random.default_rng(seed)
    A = rng.uniform(*a, (T, 1, 1))
    B = rng.uniform(*b, (T, 1, 1))
    w = ball_samples(rng, T, 1, D)
    x0 = np.array([rng.uniform(1.0, 3.0)])
    return LtvSystem(A, B, w, x0)


def identity_costs(sysm):
    return quadratic_family(np.eye(sysm.n), np.eye(sysm.m), T=sysm.T)


def double_integrator(T, w=None, x0=(1.0, 0.0)):
    """``A = [[1, .1], [0, 1]]``, ``B = [0, .1]^T``: controllability index 2."""
    A = np.broadcast_to(np.array([[1.0, 0.1], [0.0, 1.0]]), (T, 2, 2))
    B = np.broadcast_to(np.array([[0.0], [0.1]]), (T, 2, 1))
    w = np.zeros((T, 2)) if w is None else w
    return LtvSystem(A, B, w, np.array(x0))


@pytest.fixture
def sys_small():
    return small_instance(3)


@pytest.fixture
def costs_small(sys_small):
    return identity_costs(sys_small)
