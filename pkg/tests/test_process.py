import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from magbias.linalg import expm, skew
from magbias.process import (
    MB,
    MT,
    N_STATE,
    TP,
    WB,
    discretize,
    linearize,
    make_state,
    process_f,
    process_jacobian_A,
    pseudo_control,
    split_state,
    transition_matrices,
)

state15 = arrays(np.float64, 15, elements=st.floats(-2, 2))
vec3 = arrays(np.float64, 3, elements=st.floats(-2, 2))


def central_jacobian(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.column_stack(cols)


def random_state(rng):
    return make_state(rng.normal(0, 0.5, 3), rng.normal(0, 0.1, 3), rng.normal(0, 1, 6), rng.normal(0, 0.01, 3))


def test_make_and_split_roundtrip(rng):
    phi = rng.normal(size=15)
    parts = split_state(phi)
    assert np.array_equal(make_state(*parts), phi)


@pytest.mark.parametrize("shape", [(14,), (15, 1), (3, 5)])
def test_split_rejects_bad_shape(shape):
    with pytest.raises(ValueError):
        split_state(np.zeros(shape))


def test_f_zero_when_rate_is_compensated(rng):
    w_b = rng.normal(size=3)
    phi = make_state(rng.normal(size=3), w_b=w_b)
    assert np.array_equal(process_f(phi, w_b), np.zeros(15))


def test_f_zero_when_field_parallel_to_rate():
    w_b = np.array([0.01, 0.0, 0.0])
    w = np.array([0.3, 0.6, -0.9])
    phi = make_state(2.0 * (w - w_b), w_b=w_b)
    assert np.allclose(process_f(phi, w), 0.0, atol=1e-15)


@given(state15, vec3)
def test_f_matches_cross_product(phi, w):
    m_t, _, _, w_b = split_state(phi)
    f = process_f(phi, w)
    assert np.allclose(f[MT], -np.cross(w - w_b, m_t), atol=1e-12)
    assert np.array_equal(f[3:], np.zeros(12))


def test_A_zero_at_trivial_point():
    w_b = np.array([0.1, -0.2, 0.3])
    assert np.array_equal(process_jacobian_A(make_state(np.zeros(3), w_b=w_b), w_b), np.zeros((15, 15)))


def test_A_block_structure(rng):
    phi = random_state(rng)
    w = rng.normal(size=3)
    A = process_jacobian_A(phi, w)
    assert np.array_equal(A[3:], np.zeros((12, 15)))
    assert np.array_equal(A[:, MB], np.zeros((15, 3)))
    assert np.array_equal(A[:, TP], np.zeros((15, 6)))
    assert np.array_equal(A[MT, MT], -skew(w - phi[WB]))
    assert np.array_equal(A[MT, WB], -skew(phi[MT]))


def test_A_matches_central_differences_100_states(rng):
    worst = 0.0
    for _ in range(100):
        phi = random_state(rng)
        w = rng.normal(0, 0.5, 3)
        A = process_jacobian_A(phi, w)
        A_fd = central_jacobian(lambda x: process_f(x, w), phi)
        worst = max(worst, np.linalg.norm(A - A_fd) / np.linalg.norm(A))
    assert worst < 1e-6


def test_pseudo_control_zero_without_gyro_bias(rng):
    mu = make_state(rng.normal(size=3), rng.normal(size=3), rng.normal(size=6))
    assert np.allclose(pseudo_control(mu, rng.normal(size=3)), 0.0, atol=1e-15)


@given(state15, vec3)
def test_pseudo_control_closed_form(mu, w):
    # f - A mu = -J(w - w_b) m + J(w - w_b) m + J(m) w_b = m x w_b
    u = pseudo_control(mu, w)
    assert np.allclose(u[MT], np.cross(mu[MT], mu[WB]), atol=1e-12)
    assert np.array_equal(u[3:], np.zeros(12))


@given(state15, vec3)
def test_linearization_exact_at_point(mu, w):
    A = process_jacobian_A(mu, w)
    assert np.allclose(A @ mu + pseudo_control(mu, w), process_f(mu, w), atol=1e-12)


def test_discretize_zero_A():
    A_bar, B_bar = transition_matrices(np.zeros((15, 15)), 0.1)
    assert np.array_equal(A_bar, np.eye(15))
    assert np.allclose(B_bar, 0.1 * np.eye(15), rtol=0, atol=1e-16)


@pytest.mark.parametrize("tau", [0.0, -0.1])
def test_discretize_rejects_nonpositive_tau(tau):
    with pytest.raises(ValueError):
        transition_matrices(np.zeros((3, 3)), tau)
    with pytest.raises(ValueError):
        discretize(np.zeros((3, 3)), np.zeros(3), tau)


def simpson_Bbar(A, tau, panels=1000):
    s = np.linspace(0.0, tau, panels + 1)
    vals = np.array([expm(A * (tau - si)) for si in s])
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (tau / panels / 3.0) * np.tensordot(w, vals, axes=1)


def test_B_bar_matches_simpson_quadrature(rng):
    for _ in range(3):
        A = process_jacobian_A(random_state(rng), rng.normal(0, 0.5, 3))
        _, B_bar = transition_matrices(A, 0.1)
        assert np.abs(B_bar - simpson_Bbar(A, 0.1)).max() < 1e-9


def test_B_bar_matches_simpson_general_matrix(rng):
    A = rng.normal(size=(6, 6))
    _, B_bar = transition_matrices(A, 0.1)
    assert np.abs(B_bar - simpson_Bbar(A, 0.1)).max() < 1e-9


def test_discretize_agrees_with_full_transition(rng):
    for _ in range(20):
        mu = random_state(rng)
        w = rng.normal(0, 0.5, 3)
        A = process_jacobian_A(mu, w)
        u = pseudo_control(mu, w)
        A_bar, B_bar = transition_matrices(A, 0.1)
        A_bar2, Bu = discretize(A, u, 0.1)
        assert np.allclose(A_bar2, A_bar, rtol=0, atol=1e-15)
        assert np.allclose(Bu, B_bar @ u, rtol=0, atol=1e-15)


def test_semigroup(rng):
    A = process_jacobian_A(random_state(rng), rng.normal(size=3))
    a1, _ = transition_matrices(A, 0.07)
    a2, _ = transition_matrices(A, 0.13)
    a12, _ = transition_matrices(A, 0.2)
    assert np.abs(a1 @ a2 - a12).max() < 1e-13


def test_bias_rows_untouched_by_discretized_step(rng):
    for _ in range(20):
        mu = random_state(rng)
        lm = linearize(mu, rng.normal(size=3), 0.1)
        nxt = lm.A_bar @ mu + lm.B_bar @ lm.u
        assert np.allclose(nxt[3:], mu[3:], rtol=0, atol=1e-15)
        assert np.allclose(lm.A_bar, expm(lm.A * 0.1), rtol=0, atol=0)


def test_norm_preserved_with_true_biases(rng):
    # exact biases in the state: each step is a pure rotation of m_t
    w_b = np.array([-0.002, 0.003, -0.001])
    phi = make_state([0.19, -0.02, 0.45], [0.06, -0.07, -0.1], [1.1, 0.1, 0.03, 0.95, 0.01, 1.2], w_b)
    n0 = np.linalg.norm(phi[MT])
    worst = 0.0
    for _ in range(2000):
        w_t = rng.normal(size=3)
        w_t *= rng.uniform(0, 1) / np.linalg.norm(w_t)
        lm = linearize(phi, w_t + w_b, 0.1)
        nxt = lm.A_bar @ phi + lm.B_bar @ lm.u
        worst = max(worst, abs(np.linalg.norm(nxt[MT]) / np.linalg.norm(phi[MT]) - 1.0))
        phi = nxt
    assert worst < 1e-9
    assert abs(np.linalg.norm(phi[MT]) - n0) / n0 < 1e-9


def test_constants():
    assert N_STATE == 15
    assert [s.start for s in (MT, MB, TP, WB)] == [0, 3, 6, 12]
