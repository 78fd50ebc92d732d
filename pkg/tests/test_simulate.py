import numpy as np
import pytest

from magbias.attitude import attitude_matrices
from magbias.ellipsoid import sphere_coverage_metric
from magbias.linalg import pack_T
from magbias.simulate import (
    PRESETS,
    ScenarioSpec,
    body_rate,
    euler_trajectory,
    generate,
    preset_sim1,
    preset_sim2,
)


def test_preset_values():
    for make in (preset_sim1, preset_sim2):
        s = make()
        assert s.m_b == (0.06, -0.07, -0.10)
        assert s.w_b == (-0.002, 0.003, -0.001)
        assert s.t_p == (1.1, 0.1, 0.03, 0.95, 0.01, 1.2)
        assert (s.sigma_m, s.sigma_w, s.imu_rate) == (2e-4, 2.4e-4, 20.0)
    assert preset_sim1().amplitudes_deg == (180.0, 180.0, 180.0)
    assert preset_sim2().amplitudes_deg == (45.0, 45.0, 180.0)


def test_preset_sim2_roll_pitch_below_50():
    assert max(preset_sim2().amplitudes_deg[:2]) < 50


def test_preset_soft_iron_positive_definite():
    assert np.linalg.eigvalsh(pack_T(preset_sim1().t_p)).min() > 0


def test_preset_overrides_and_registry():
    assert preset_sim1(rng_seed=7).rng_seed == 7
    assert set(PRESETS) == {"sim1", "sim2"}


@pytest.mark.parametrize(
    "kw",
    [
        {"duration": 0.0},
        {"imu_rate": -1.0},
        {"sigma_m": -1e-3},
        {"t_p": (1.0, 2.0, 0.0, 1.0, 0.0, 1.0)},
        {"speed": -1.0},
        {"frequencies_hz": (-0.1, 0.0, 0.0)},
    ],
)
def test_invalid_spec(kw):
    with pytest.raises(ValueError):
        generate(ScenarioSpec(**kw))


def test_static_noise_free_streams_constant():
    spec = preset_sim1(amplitudes_deg=(0, 0, 0), sigma_m=0.0, sigma_w=0.0, sigma_a=0.0, duration=30.0)
    log, truth = generate(spec)
    assert np.array_equal(log.gyro, np.tile(spec.w_b, (len(log), 1)))
    assert np.all(log.mag == log.mag[0])
    assert np.allclose(log.accel, [0, 0, -9.81])


def test_sample_count_and_rate():
    log, _ = generate(preset_sim2(duration=10.0))
    assert len(log) == 201
    assert np.allclose(np.diff(log.t), 0.05)


def test_reproducible_same_seed():
    a, _ = generate(preset_sim1(duration=60.0, rng_seed=3))
    b, _ = generate(preset_sim1(duration=60.0, rng_seed=3))
    c, _ = generate(preset_sim1(duration=60.0, rng_seed=4))
    for name in ("mag", "gyro", "accel"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.mag, c.mag)


@pytest.mark.parametrize("make", [preset_sim1, preset_sim2])
def test_ground_truth_consistency(make):
    spec = make(duration=300.0)
    _, truth = generate(spec)
    eye = np.einsum("nij,nkj->nik", truth.R, truth.R)
    assert np.abs(eye - np.eye(3)).max() < 1e-10
    assert np.allclose(np.linalg.det(truth.R), 1.0, atol=1e-12)
    assert np.abs(np.einsum("nji,j->ni", truth.R, spec.world_field) - truth.m_t).max() < 1e-15
    norms = np.linalg.norm(truth.m_t, axis=1)
    assert np.abs(norms - np.linalg.norm(spec.world_field)).max() < 1e-12


def test_attitude_record_reproduces_rotation():
    _, truth = generate(preset_sim1(duration=200.0))
    assert np.abs(attitude_matrices(truth.attitude) - truth.R).max() < 1e-9
    assert np.all(np.abs(truth.attitude[:, 1]) <= np.pi / 2)


@pytest.mark.parametrize("make", [preset_sim1, preset_sim2])
def test_body_rate_matches_finite_difference(make):
    spec = make()
    dt = 1e-3
    t = np.arange(0.0, 120.0, dt)
    euler, rates = euler_trajectory(spec, t)
    R = attitude_matrices(euler)
    w = body_rate(euler, rates)
    # central difference of R: R^T dR/dt = skew(w)
    dR = (R[2:] - R[:-2]) / (2 * dt)
    Om = np.einsum("nji,njk->nik", R[1:-1], dR)
    w_fd = np.column_stack([Om[:, 2, 1], Om[:, 0, 2], Om[:, 1, 0]])
    rel = np.linalg.norm(w_fd - w[1:-1], axis=1) / np.maximum(np.linalg.norm(w[1:-1], axis=1), 1e-3)
    assert rel.max() < 1e-5


def test_sim1_sweeps_sphere():
    _, truth = generate(preset_sim1())
    assert sphere_coverage_metric(truth.m_t, center=np.zeros(3)) > 0.5


def test_sim2_rates_moderate():
    spec = preset_sim2()
    t = np.arange(0.0, spec.duration, 0.05)
    w = body_rate(*euler_trajectory(spec, t))
    assert np.linalg.norm(w, axis=1).max() < 0.3


def test_measurement_model_applied():
    spec = preset_sim1(duration=20.0)
    log, truth = generate(spec)
    rng = np.random.default_rng(spec.rng_seed)
    n = len(log)
    n_m = spec.sigma_m * rng.standard_normal((n, 3))
    n_w = spec.sigma_w * rng.standard_normal((n, 3))
    assert np.allclose(log.mag, truth.m_t @ pack_T(spec.t_p).T + spec.m_b + n_m, rtol=0, atol=1e-15)
    assert np.allclose(log.gyro, truth.w_t + spec.w_b + n_w, rtol=0, atol=1e-15)


def test_speed_adds_dvl_and_gps():
    spec = preset_sim2(duration=100.0, speed=1.5, sigma_v=0.0)
    log, truth = generate(spec)
    assert log.velocity.shape == (len(log), 3) and log.gps.shape == (len(log), 2)
    assert np.allclose(log.velocity, [1.5, 0, 0])
    assert np.array_equal(log.gps, truth.position[:, :2])
    assert generate(preset_sim2(duration=10.0))[0].velocity is None


def test_field_properties():
    s = preset_sim1()
    assert s.field_mag_sq == pytest.approx(0.19**2 + 0.02**2 + 0.45**2)
    # with the heading offset, magnetic heading equals true heading
    from magbias.attitude import heading

    R = attitude_matrices(np.array([[0.0, 0.0, 0.8]]))[0]
    assert heading(R.T @ np.asarray(s.world_field), 0, 0, s.heading_offset) == pytest.approx(0.8)
