import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import small_instance
from ltv_pc.costs import (
    INDICATOR_ORIGIN,
    ZERO,
    CostModel,
    PseudoHuberCost,
    QuadraticCost,
    ShiftedCost,
    TerminalCost,
    pseudo_huber_family,
    quadratic_family,
    random_quadratic_family,
    recenter_costs,
)
from ltv_pc.errors import TimeRangeError, ValidationError
from ltv_pc.system import LtvSystem


def test_quadratic_scalar_example():
    model = quadratic_family(2 * np.eye(1), 2 * np.eye(1), T=3)
    assert model.state_cost(1).value(np.ones(1)) == 1.0
    assert model.control_cost(3).value(np.ones(1)) == 1.0
    assert model.m_f == model.ell_f == 2.0


def test_diagonal_constants():
    model = quadratic_family(np.diag([1.0, 3.0]), np.eye(1), T=4)
    assert model.m_f == 1.0 and model.ell_f == 3.0


def test_terminal_state_cost_exempt_from_ell_f():
    Q = [np.eye(1)] * 3 + [10 * np.eye(1)]
    model = quadratic_family(Q, [np.eye(1)] * 4)
    assert model.ell_f == 1.0
    assert model.ell_f_terminal == 10.0
    assert model.m_f == 1.0


def test_pseudo_huber_value():
    f = PseudoHuberCost(1.0, 2.0, 1)
    assert f.value(np.ones(1)) == pytest.approx(1.3284271247461903, abs=1e-12)
    assert f.value(np.zeros(1)) == 0.0
    assert np.all(f.gradient(np.zeros(1)) == 0.0)


def test_pseudo_huber_alpha_zero_is_quadratic():
    ph = pseudo_huber_family(1.5, 0.0, (2, 1), 3)
    q = quadratic_family(1.5 * np.eye(2), 1.5 * np.eye(1), T=3)
    x = np.array([0.3, -2.0])
    assert ph.f[1].value(x) == pytest.approx(q.f[1].value(x), rel=1e-15)
    np.testing.assert_allclose(ph.f[1].hessian(x), q.f[1].hessian(x))


@pytest.mark.parametrize("Q", [np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([[1.0, 0.5], [0.0, 1.0]]), -np.eye(2)])
def test_non_spd_rejected(Q):
    with pytest.raises(ValidationError):
        QuadraticCost(Q)


def test_pseudo_huber_bad_modulus():
    with pytest.raises(ValidationError):
        PseudoHuberCost(0.0, 1.0, 2)


def test_model_length_mismatch():
    with pytest.raises(ValidationError):
        CostModel((QuadraticCost(np.eye(1)),) * 3, (QuadraticCost(np.eye(1)),) * 2)


def test_index_range():
    model = quadratic_family(np.eye(1), np.eye(1), T=2)
    with pytest.raises(TimeRangeError):
        model.state_cost(0)
    with pytest.raises(TimeRangeError):
        model.control_cost(3)


def test_model_system_mismatch():
    s = small_instance(0, n=2, m=2, T=5)
    with pytest.raises(ValidationError):
        quadratic_family(np.eye(2), np.eye(2), T=6).check_system(s)


def test_terminal_variants():
    assert ZERO.tag == "Zero" and INDICATOR_ORIGIN.tag == "IndicatorOrigin"
    assert TerminalCost.from_name("IndicatorOrigin") is INDICATOR_ORIGIN
    sm = TerminalCost.smooth(QuadraticCost(np.eye(2)))
    assert sm.tag == "Smooth" and sm.fn.value(np.zeros(2)) == 0.0
    with pytest.raises(ValidationError):
        TerminalCost("indicator", QuadraticCost(np.eye(1)))
    with pytest.raises(ValidationError):
        TerminalCost.from_name("huge")


def test_recenter_identity():
    s = small_instance(1, T=6)
    model = quadratic_family(np.eye(2), np.eye(2), T=6)
    m2, s2 = recenter_costs(model, s, np.zeros((7, 2)), np.zeros((6, 2)))
    assert np.array_equal(s2.w, s.w) and np.array_equal(s2.x0, s.x0)
    x = np.array([0.4, 1.0])
    assert m2.f[2].value(x) == model.f[2].value(x)


def test_recenter_scalar_shift():
    # f_t minimized at 1 for every t: the shift enters through A and leaves through the next state
    T = 4
    s = LtvSystem(np.ones((T, 1, 1)), np.ones((T, 1, 1)), np.zeros((T, 1)), np.array([2.0]))
    model = CostModel(tuple(QuadraticCost(np.eye(1), center=np.ones(1)) for _ in range(T)),
                      tuple(QuadraticCost(np.eye(1)) for _ in range(T)))
    m2, s2 = recenter_costs(model, s, np.ones((T + 1, 1)), np.zeros((T, 1)))
    np.testing.assert_allclose(s2.w, 0.0)
    assert s2.x0[0] == 1.0
    assert m2.f[0].value(np.zeros(1)) == 0.0


def test_recenter_shape_errors():
    s = small_instance(1, T=4)
    model = quadratic_family(np.eye(2), np.eye(2), T=4)
    with pytest.raises(ValidationError):
        recenter_costs(model, s, np.zeros((4, 2)), np.zeros((4, 2)))


@given(st.integers(0, 10_000))
def test_recenter_preserves_cost_of_fixed_controls(seed):
    rng = np.random.default_rng(seed)
    T, n, m = 6, 2, 2
    s = small_instance(seed % 50, n=n, m=m, T=T)
    fmin = rng.standard_normal((T + 1, n))
    cmin = rng.standard_normal((T, m))
    model = CostModel(
        tuple(QuadraticCost(np.diag(rng.uniform(0.5, 2, n)), center=fmin[t + 1]) for t in range(T)),
        tuple(PseudoHuberCost(1.0, 0.7, m, center=cmin[t]) for t in range(T)),
    )
    s = s.replace(x0=s.x0 + fmin[0])
    u = rng.standard_normal((T, m))
    m2, s2 = recenter_costs(model, s, fmin, cmin)
    tr = s.simulate(u)
    tr2 = s2.simulate(u - cmin)
    np.testing.assert_allclose(tr2.states, tr.states - fmin, atol=1e-12)
    assert abs(m2.total_cost(tr2.states, tr2.controls) - model.total_cost(tr.states, tr.controls)) <= 1e-12 * (
        1 + model.total_cost(tr.states, tr.controls)
    )


# --- per-function properties


def _cost_fns():
    rng = np.random.default_rng(5)
    out = [QuadraticCost(np.diag([1.0, 3.0]))]
    out += list(random_quadratic_family(rng, 3, 1, 2).f)
    out += [PseudoHuberCost(0.8, 2.5, 3), PseudoHuberCost(1.0, 0.0, 2)]
    out += [ShiftedCost(PseudoHuberCost(1.0, 1.0, 2), np.array([0.5, -1.0]), 0.0)]
    return out


FNS = _cost_fns()


@pytest.mark.parametrize("fn", FNS[:-1], ids=lambda f: type(f).__name__)
def test_minimized_at_origin(fn):
    z = np.zeros(fn.dim)
    assert fn.value(z) == 0.0
    assert np.all(fn.gradient(z) == 0.0)


@given(st.integers(0, len(FNS) - 1), st.integers(0, 2**32 - 1))
def test_hessian_within_declared_bounds(i, seed):
    fn = FNS[i]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(fn.dim) * 10 ** rng.uniform(-2, 2)
    h = rng.standard_normal(fn.dim)
    quad = h @ fn.hessian(x) @ h
    hh = h @ h
    assert fn.m * hh - 1e-9 <= quad <= fn.ell * hh + 1e-9


@given(st.integers(0, len(FNS) - 1), st.integers(0, 2**32 - 1))
def test_derivatives_match_finite_differences(i, seed):
    fn = FNS[i]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(fn.dim) * 2
    eps = 1e-5
    E = np.eye(fn.dim) * eps
    g_fd = np.array([(fn.value(x + e) - fn.value(x - e)) / (2 * eps) for e in E])
    H_fd = np.column_stack([(fn.gradient(x + e) - fn.gradient(x - e)) / (2 * eps) for e in E])
    g, H = fn.gradient(x), fn.hessian(x)
    assert np.linalg.norm(g_fd - g) <= 1e-5 * max(1.0, np.linalg.norm(g))
    assert np.linalg.norm(H_fd - H) <= 1e-5 * max(1.0, np.linalg.norm(H))


@given(st.integers(0, len(FNS) - 1), st.integers(0, 2**32 - 1))
def test_batched_forms_agree(i, seed):
    fn = FNS[i]
    X = np.random.default_rng(seed).standard_normal((4, fn.dim))
    np.testing.assert_allclose(fn.values(X), [fn.value(x) for x in X], rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(fn.gradients(X), [fn.gradient(x) for x in X], rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(fn.hessians(X), [fn.hessian(x) for x in X], rtol=1e-13)
