import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazepipe.errors import ConfigError
from gazepipe.fusion import (
    FusionConfig,
    FusionDiagnostics,
    Quaternion,
    estimate_yaw_series,
    madgwick_update,
    quaternion_from_accel_mag,
    yaw_from_quaternion,
)
from gazepipe.synthgen import GazeShift, ImuSeries, StrategyProfile, gen_imu

RATE = 30.0
DT = 1.0 / RATE


def rotation_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def qmul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return Quaternion(
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    )


def exact_step(q, omega, dt):
    """Closed-form integration of a constant body rate over one step."""
    rate = np.linalg.norm(omega)
    if rate == 0:
        return q
    half = 0.5 * rate * dt
    axis = np.asarray(omega) / rate
    return qmul(q, Quaternion(math.cos(half), *(math.sin(half) * axis)))


def yaw_turn_series(rate_dps, seconds, bias_dps=0.0, settle_s=0.0):
    """Noise-free level IMU turning at a constant rate, then holding."""
    n = int(round((seconds + settle_s) * RATE)) + 1
    t = np.arange(n) * DT
    psi = np.radians(rate_dps * np.minimum(t, seconds))
    rate = np.where(t < seconds, rate_dps, 0.0)
    gyro = np.zeros((n, 3))
    gyro[:, 2] = np.radians(rate + bias_dps)
    accel = np.tile([0.0, 0.0, 1.0], (n, 1))
    mag = np.column_stack([np.cos(psi), -np.sin(psi), np.zeros(n)])
    return ImuSeries(gyro, accel, mag, RATE, 0.0, true_yaw_deg=np.degrees(psi))


class TestUpdate:
    def test_equilibrium(self):
        q = madgwick_update(Quaternion.identity(), (0, 0, 0), (0, 0, 1), (1, 0, 0), DT,
                            FusionConfig())
        assert q == pytest.approx(Quaternion.identity(), abs=1e-15)

    def test_pure_integration_ten_seconds(self):
        cfg = FusionConfig(beta=0.0)
        q = Quaternion.identity()
        for _ in range(300):
            q = madgwick_update(q, (0, 0, math.radians(1.0)), (0, 0, 1), (1, 0, 0), DT, cfg)
        assert yaw_from_quaternion(q) == pytest.approx(10.0, abs=0.05)

    def test_beta_zero_tracks_exact_integration(self, rng):
        cfg = FusionConfig(beta=0.0)
        q_f = q_x = Quaternion.identity()
        worst = 0.0
        for _ in range(150):
            omega = rng.normal(0.0, 1.0, 3)
            q_f = madgwick_update(q_f, omega, (0, 0, 1), (1, 0, 0), DT, cfg)
            q_x = exact_step(q_x, omega, DT)
            # align the sign of the double cover before comparing
            err = min(np.linalg.norm(np.subtract(q_f, q_x)), np.linalg.norm(np.add(q_f, q_x)))
            worst = max(worst, err)
        # per-step error is O(dt^3) for first-order integration plus
        # renormalization; 150 steps stay well inside 150 * dt^2
        assert worst < 150 * DT**2

    def test_zero_accel_falls_back_to_gyro(self):
        diag = FusionDiagnostics()
        cfg = FusionConfig(beta=0.5)
        q = madgwick_update(Quaternion.identity(), (0, 0, 0.3), (0, 0, 0), (1, 0, 0), DT, cfg, diag)
        ref = madgwick_update(Quaternion.identity(), (0, 0, 0.3), (0, 0, 1), (1, 0, 0), DT,
                              FusionConfig(beta=0.0))
        assert diag.gyro_only_steps == 1 and diag.skipped_indices == [0]
        assert q == pytest.approx(ref, abs=1e-15)

    def test_zero_mag_falls_back_to_gyro(self):
        diag = FusionDiagnostics()
        madgwick_update(Quaternion.identity(), (0, 0, 0.3), (0, 0, 1), (0, 0, 0), DT,
                        FusionConfig(), diag)
        assert diag.gyro_only_steps == 1

    def test_negative_beta_rejected(self):
        with pytest.raises(ConfigError):
            FusionConfig(beta=-0.1)

    @settings(max_examples=200, deadline=None)
    @given(
        q=st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda v: np.linalg.norm(v) > 0.1),
        gyro=st.tuples(*[st.floats(-10, 10)] * 3),
        accel=st.tuples(*[st.floats(-2, 2)] * 3),
        mag=st.tuples(*[st.floats(-2, 2)] * 3),
        beta=st.floats(0, 2),
    )
    def test_unit_norm_after_update(self, q, gyro, accel, mag, beta):
        q0 = Quaternion(*q).normalized()
        out = madgwick_update(q0, gyro, accel, mag, DT, FusionConfig(beta=beta))
        assert abs(out.norm() - 1.0) <= 1e-9


class TestYaw:
    def test_identity(self):
        assert yaw_from_quaternion(Quaternion.identity()) == 0.0

    def test_quarter_turn(self):
        assert yaw_from_quaternion(Quaternion.from_yaw(90.0)) == pytest.approx(90.0, abs=1e-12)

    def test_half_turn_maps_to_plus_180(self):
        assert yaw_from_quaternion(Quaternion(0.0, 0.0, 0.0, 1.0)) == 180.0
        assert yaw_from_quaternion(Quaternion(0.0, 0.0, 0.0, -1.0)) == 180.0

    @settings(max_examples=300, deadline=None)
    @given(st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda v: np.linalg.norm(v) > 0.1))
    def test_matches_rotation_matrix(self, v):
        q = Quaternion(*v).normalized()
        R = rotation_matrix(q)
        if math.hypot(R[0, 0], R[1, 0]) < 1e-6:
            return  # gimbal lock: heading undefined
        oracle = math.degrees(math.atan2(R[1, 0], R[0, 0]))
        got = yaw_from_quaternion(q)
        diff = (got - oracle + 180.0) % 360.0 - 180.0
        assert abs(diff) <= 1e-9
        assert -180.0 < got <= 180.0


class TestInitialisation:
    @pytest.mark.parametrize("yaw", [-170.0, -45.0, 0.0, 30.0, 120.0])
    def test_level_heading(self, yaw):
        psi = math.radians(yaw)
        q = quaternion_from_accel_mag((0, 0, 1), (math.cos(psi), -math.sin(psi), 0))
        assert yaw_from_quaternion(q) == pytest.approx(yaw, abs=1e-9)

    def test_tilted_sensor(self):
        # rotate the earth-frame gravity and field into a tilted, turned body
        q_true = qmul(Quaternion.from_yaw(40.0), Quaternion(math.cos(0.1), math.sin(0.1), 0, 0))
        R = rotation_matrix(q_true)
        accel = R.T @ np.array([0, 0, 1.0])
        mag = R.T @ np.array([0.6, 0, -0.8])
        q = quaternion_from_accel_mag(accel, mag)
        assert yaw_from_quaternion(q) == pytest.approx(40.0, abs=1e-9)


class TestSeries:
    def test_stationary(self):
        imu = yaw_turn_series(0.0, 0.0, settle_s=5.0)
        yaw = estimate_yaw_series(imu)
        assert np.max(np.abs(yaw.samples[int(0.3 * RATE):])) <= 0.5

    def test_generated_plateau(self):
        shift = GazeShift.from_delta(90, "head_free")
        strat = StrategyProfile(head_fraction=1.0, noise_scale=0.0)
        imu = gen_imu(shift, strat, np.random.default_rng(0))
        yaw = estimate_yaw_series(imu)
        late = yaw.times >= 1.0
        assert np.all(np.abs(yaw.samples[late] - imu.true_yaw_deg[late]) <= 2.0)
        assert np.mean(yaw.samples[late]) == pytest.approx(90.0, abs=2.0)

    def test_monotone_tracking(self):
        shift = GazeShift.from_delta(-60, "head_free")
        strat = StrategyProfile(head_fraction=0.8, noise_scale=0.0)
        yaw = estimate_yaw_series(gen_imu(shift, strat, np.random.default_rng(1))).samples
        # non-increasing turn; the normalized gradient step makes the estimate
        # chatter by about 2*beta*dt rad (0.38 deg) once it reaches the plateau
        assert np.all(np.diff(yaw) <= 0.5)
        assert yaw[-1] == pytest.approx(-48.0, abs=1.0)

    @pytest.mark.parametrize("c", [0.25, 2.0, 8.0])
    def test_mag_scale_power_of_two_exact(self, c, rng):
        imu = gen_imu(GazeShift.from_delta(60, "head_free"), StrategyProfile(0.7), rng)
        scaled = ImuSeries(imu.gyro, imu.accel, c * imu.mag, imu.rate_hz, imu.t0_s)
        a = estimate_yaw_series(imu).samples
        b = estimate_yaw_series(scaled).samples
        np.testing.assert_array_equal(a, b)

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(1e-3, 1e3))
    def test_mag_scale_any_positive(self, c):
        imu = gen_imu(GazeShift.from_delta(-30, "head_free"), StrategyProfile(0.5),
                      np.random.default_rng(7))
        scaled = ImuSeries(imu.gyro, imu.accel, c * imu.mag, imu.rate_hz, imu.t0_s)
        a = estimate_yaw_series(imu).samples
        b = estimate_yaw_series(scaled).samples
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)

    def test_output_grid(self):
        imu = gen_imu(GazeShift.from_delta(30, "head_free"), StrategyProfile(0.5),
                      np.random.default_rng(3))
        yaw = estimate_yaw_series(imu)
        assert len(yaw) == len(imu) == 150
        assert yaw.rate_hz == 30.0 and yaw.t0_s == -0.5
