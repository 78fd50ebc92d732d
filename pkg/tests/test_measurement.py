import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from magbias.linalg import SOFT_IRON_D, kron, pack_T
from magbias.measurement import measurement_h, measurement_jacobian_C
from magbias.process import MB, MT, TP, WB, make_state

from test_process import central_jacobian, random_state

PRESET_T_P = [1.1, 0.1, 0.03, 0.95, 0.01, 1.2]
PRESET_M_B = [0.06, -0.07, -0.10]


def test_h_identity_calibration():
    h = measurement_h(make_state([0.2, 0.0, -0.4]))
    assert np.allclose(h, [0.2, 0.0, -0.4, 0.20], rtol=0, atol=1e-15)


def test_h_preset_biases():
    h = measurement_h(make_state([0.2, 0.0, 0.0], PRESET_M_B, PRESET_T_P))
    assert np.allclose(h, [0.28, -0.05, -0.094, 0.04], rtol=0, atol=1e-15)


@given(arrays(np.float64, 3, elements=st.floats(-1, 1)), arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_h_norm_row_rotation_invariant(m, rv):
    from scipy.spatial.transform import Rotation

    phi = make_state(m, PRESET_M_B, PRESET_T_P)
    rotated = make_state(Rotation.from_rotvec(rv).apply(m), PRESET_M_B, PRESET_T_P)
    assert np.isclose(measurement_h(phi)[3], measurement_h(rotated)[3], rtol=1e-12, atol=1e-15)


def test_C_at_zero_field():
    C = measurement_jacobian_C(make_state(np.zeros(3), PRESET_M_B, PRESET_T_P))
    assert np.array_equal(C[:3, MT], pack_T(PRESET_T_P))
    assert np.array_equal(C[:3, MB], np.eye(3))
    assert np.array_equal(C[:, TP], np.zeros((4, 6)))
    assert np.array_equal(C[3], np.zeros(15))


def test_C_w_b_columns_zero(rng):
    assert np.array_equal(measurement_jacobian_C(random_state(rng))[:, WB], np.zeros((4, 3)))


def test_C_matches_central_differences_100_states(rng):
    worst = 0.0
    for _ in range(100):
        phi = random_state(rng)
        C = measurement_jacobian_C(phi)
        worst = max(worst, np.linalg.norm(C - central_jacobian(measurement_h, phi)) / np.linalg.norm(C))
    assert worst < 1e-6


def test_C_soft_iron_block_is_kron_form(rng):
    for _ in range(20):
        phi = random_state(rng)
        block = kron(phi[MT], np.eye(3)) @ SOFT_IRON_D
        assert np.array_equal(measurement_jacobian_C(phi)[:3, TP], block)


def test_C_soft_iron_block_vec_identity(rng):
    phi = random_state(rng)
    C = measurement_jacobian_C(phi)
    assert np.allclose(C[:3, TP] @ phi[TP], pack_T(phi[TP]) @ phi[MT], atol=1e-14)


def test_C_times_state_is_not_h(rng):
    # h is bilinear in (T, m_t) and quadratic in m_t: C phi double counts
    phi = random_state(rng)
    Cphi = measurement_jacobian_C(phi) @ phi
    T, m_t, m_b = pack_T(phi[TP]), phi[MT], phi[MB]
    assert np.allclose(Cphi[:3], 2 * T @ m_t + m_b, atol=1e-13)
    assert np.isclose(Cphi[3], 2 * m_t @ m_t)
