import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import double_integrator, small_instance
from ltv_pc import kernels
from ltv_pc.errors import TimeRangeError, UncontrollableError, ValidationError
from ltv_pc.system import (
    FAMILIES,
    InstanceSpec,
    LtvSystem,
    Trajectory,
    analyze_controllability,
    controllability_matrix,
    generate_instance,
    transition_matrix,
)


def scalar_sys(a, b, T):
    return LtvSystem(np.full((T, 1, 1), a), np.full((T, 1, 1), b), np.zeros((T, 1)), np.zeros(1))


def test_transition_scalar():
    s = scalar_sys(2.0, 1.0, 5)
    assert transition_matrix(s, 3, 0)[0, 0] == 8.0
    assert np.array_equal(transition_matrix(s, 2, 2), np.eye(1))
    assert np.array_equal(transition_matrix(s, 1, 3), np.eye(1))


def test_controllability_matrix_scalar():
    s = scalar_sys(0.5, 1.0, 4)
    np.testing.assert_allclose(controllability_matrix(s, 0, 2), [[0.5, 1.0]])


def test_double_integrator_index_two():
    rep = analyze_controllability(double_integrator(10))
    assert rep.d == 2
    assert rep.sigma > 0
    assert len(rep.per_t_sigma) == 10 - 2 + 1


def test_time_range_errors():
    s = scalar_sys(1.0, 1.0, 3)
    with pytest.raises(TimeRangeError):
        transition_matrix(s, 5, 0)
    with pytest.raises(TimeRangeError):
        controllability_matrix(s, 2, 2)


def test_zero_input_is_uncontrollable():
    s = LtvSystem(np.ones((4, 1, 1)), np.zeros((4, 1, 1)), np.zeros((4, 1)), np.zeros(1))
    with pytest.raises(UncontrollableError):
        analyze_controllability(s)


@pytest.mark.parametrize(
    "A,B,w,x0",
    [
        (np.zeros((3, 2, 3)), np.zeros((3, 2, 1)), np.zeros((3, 2)), np.zeros(2)),
        (np.zeros((3, 2, 2)), np.zeros((2, 2, 1)), np.zeros((3, 2)), np.zeros(2)),
        (np.zeros((3, 2, 2)), np.zeros((3, 2, 1)), np.zeros((3, 3)), np.zeros(2)),
        (np.zeros((3, 2, 2)), np.zeros((3, 2, 1)), np.zeros((3, 2)), np.zeros(3)),
        (np.full((3, 2, 2), np.nan), np.zeros((3, 2, 1)), np.zeros((3, 2)), np.zeros(2)),
    ],
)
def test_shape_validation(A, B, w, x0):
    with pytest.raises(ValidationError):
        LtvSystem(A, B, w, x0)


def test_arrays_read_only():
    s = small_instance(0)
    with pytest.raises(ValueError):
        s.A[0, 0, 0] = 1.0


def test_json_round_trip():
    s = small_instance(1, T=6)
    back = LtvSystem.from_json(s.to_json())
    for name in "ABw":
        assert np.array_equal(getattr(back, name), getattr(s, name))
    doc = json.loads(s.to_json())
    doc["T"] = 99
    with pytest.raises(ValidationError):
        LtvSystem.from_dict(doc)


def test_simulate_feasible_and_certify_catches_tampering():
    s = small_instance(2, T=15)
    u = np.random.default_rng(0).standard_normal((15, s.m))
    tr = s.simulate(u)
    assert tr.is_feasible()
    bad = tr.states.copy()
    bad[5] += 1e-3
    assert not Trajectory.certify(s, bad, u).is_feasible()


@pytest.mark.parametrize("family", FAMILIES)
def test_generators_deterministic(family):
    n, m = (4, 2) if family == "gridfreq_toy" else (3, 2)
    spec = InstanceSpec(family, n, m, 30)
    a, b = generate_instance(spec, 11), generate_instance(spec, 11)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.w, b.w) and np.array_equal(a.x0, b.x0)
    analyze_controllability(a)
    if family != "tracking":  # tracking folds the reference into w
        w = generate_instance(InstanceSpec(family, n, m, 30, D=0.7), 4).w
        assert np.all(np.linalg.norm(w, axis=1) <= 0.7 + 1e-12)


def test_gridfreq_time_invariant_without_modulation():
    s = generate_instance(InstanceSpec("gridfreq_toy", 4, 2, 12, inertia_amplitude=0.0), 0)
    assert np.allclose(s.A, s.A[0])
    assert analyze_controllability(s).d == 2


def test_instance_spec_rejects_bad_fields():
    with pytest.raises(ValidationError):
        InstanceSpec.from_dict({"family": "random_stable", "n": 2, "m": 1, "T": 5, "colour": 1})
    with pytest.raises(ValidationError):
        generate_instance(InstanceSpec("nope", 2, 1, 5), 0)
    with pytest.raises(ValidationError):
        generate_instance(InstanceSpec("gridfreq_toy", 3, 2, 5), 0)


# --- properties


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(2, 12))
def test_semigroup(seed, n, T):
    rng = np.random.default_rng(seed)
    s = LtvSystem(rng.standard_normal((T, n, n)), rng.standard_normal((T, n, 1)), np.zeros((T, n)), np.zeros(n))
    t1, t2, t3 = sorted(rng.integers(0, T + 1, 3))
    lhs = transition_matrix(s, t3, t1)
    rhs = transition_matrix(s, t3, t2) @ transition_matrix(s, t2, t1)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 2))
def test_sigma_bound_holds_beyond_index(seed, n, m):
    s = small_instance(seed, n=n, m=m, T=3 * n + 4, family="random_general")
    rep = analyze_controllability(s)
    for p in (rep.d, rep.d + 1, rep.d + 2):
        for t in range(0, s.T - p + 1):
            smin = np.linalg.svd(controllability_matrix(s, t, p), compute_uv=False)[n - 1]
            assert smin >= rep.sigma * (1 - 1e-12)


@given(st.integers(0, 10_000))
def test_rollout_matches_definition(seed):
    s = small_instance(seed, n=3, m=2, T=8, family="random_general")
    u = np.random.default_rng(seed).standard_normal((8, 2))
    x = s.x0.copy()
    for t in range(8):
        x = s.A[t] @ x + s.B[t] @ u[t] + s.w[t]
    np.testing.assert_allclose(s.simulate(u).states[-1], x, atol=1e-12)
    assert kernels.dynamics_residual(s.A, s.B, s.w, s.simulate(u).states, u) < 1e-12
