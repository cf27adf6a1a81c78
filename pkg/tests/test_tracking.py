"""Kalman filter: model matrices, covariances, recursion properties, NEES."""

import math

import numpy as np
import pytest
from scipy.stats import chi2

from gaittrack.clustering import ExtensionObservation
from gaittrack.tracking import (
    NoiseConfig,
    Track,
    TrackState,
    build_F,
    build_Q,
    make_track,
    measurement_covariance,
    observation_matrix,
    predict,
    update,
    wrap_orientation_residual,
)

DT = 0.067


@pytest.fixture
def noise():
    return NoiseConfig()


def fresh_track(noise, x=0.0, y=2.0, vx=0.0, vy=0.0):
    obs = ExtensionObservation(mu_x=x, mu_y=y, length=0.5, width=0.25,
                               angle=0.3)
    track = make_track(0, obs, noise)
    track.state.vx = vx
    track.state.vy = vy
    return track


class TestModelMatrices:
    def test_transition_structure(self):
        F = build_F(DT)
        assert F[0, 2] == F[1, 3] == DT
        assert np.array_equal(F[4:, 4:], np.eye(3))
        assert np.array_equal(F[:4, 4:], np.zeros((4, 3)))

    def test_constant_velocity_step(self):
        F = build_F(DT)
        state = np.array([1.0, 2.0, 1.0, -1.0, 0.5, 0.3, 0.1])
        out = F @ state
        assert out[0] == pytest.approx(1.067)
        assert out[1] == pytest.approx(1.933)
        assert np.allclose(out[2:], state[2:])

    def test_semigroup(self):
        # applying the one-step matrix twice equals the two-step matrix
        assert np.allclose(build_F(DT) @ build_F(DT), build_F(2 * DT))

    def test_process_noise_zero_acceleration(self):
        cfg = NoiseConfig(sigma_accel=0.0)
        Q = build_Q(cfg, DT)
        assert np.all(Q[:4, :4] == 0)
        assert np.all(np.diag(Q)[4:] > 0)

    def test_process_noise_value(self, noise):
        # sigma_a^2 * dt^4 / 4 = 64 * 0.067^4 / 4
        Q = build_Q(noise, DT)
        assert Q[0, 0] == pytest.approx(64 * DT ** 4 / 4, rel=1e-12)
        assert Q[0, 0] == pytest.approx(3.2241e-4, rel=1e-3)

    def test_process_noise_psd(self, noise):
        Q = build_Q(noise, DT)
        assert np.allclose(Q, Q.T)
        assert np.linalg.eigvalsh(Q).min() >= -1e-15

    def test_observation_matrix(self):
        H = observation_matrix()
        state = np.arange(7.0)
        assert np.array_equal(H @ state, [0, 1, 4, 5, 6])


class TestMeasurementCovariance:
    def test_boresight_geometry(self, noise):
        # target straight ahead at 1 m: cross-range variance is angular,
        # down-range variance is the range noise, no correlation
        R = measurement_covariance(TrackState(x=0.0, y=1.0), noise)
        assert R[0, 0] == pytest.approx(noise.sigma_azimuth ** 2)
        assert R[1, 1] == pytest.approx(noise.sigma_range ** 2)
        assert R[0, 1] == pytest.approx(0.0, abs=1e-18)

    def test_range_squared_scaling(self, noise):
        near = measurement_covariance(TrackState(x=0.0, y=1.0), noise)
        far = measurement_covariance(TrackState(x=0.0, y=4.0), noise)
        assert far[0, 0] == pytest.approx(16 * near[0, 0])

    def test_matches_numerical_jacobian(self, noise):
        rng = np.random.default_rng(2)
        h = 1e-6
        for _ in range(20):
            x, y = rng.uniform(-3, 3), rng.uniform(0.5, 5)
            R = measurement_covariance(TrackState(x=x, y=y), noise)
            r0 = math.hypot(x, y)
            az0 = math.atan2(x, y)

            def cart(r, az):
                return np.array([r * math.sin(az), r * math.cos(az)])

            J = np.column_stack([
                (cart(r0 + h, az0) - cart(r0 - h, az0)) / (2 * h),
                (cart(r0, az0 + h) - cart(r0, az0 - h)) / (2 * h)])
            want = J @ np.diag([noise.sigma_range ** 2,
                                noise.sigma_azimuth ** 2]) @ J.T
            assert np.allclose(R[:2, :2], want, atol=1e-6)

    def test_too_close_to_origin(self, noise):
        with pytest.raises(ValueError, match="Jacobian"):
            measurement_covariance(TrackState(x=0.0, y=0.001), noise)

    def test_extension_block_constant(self, noise):
        R = measurement_covariance(TrackState(x=1.0, y=3.0), noise)
        assert np.allclose(np.diag(R)[2:],
                           [noise.sigma_obs_len ** 2,
                            noise.sigma_obs_width ** 2,
                            noise.sigma_obs_orient ** 2])
        assert np.all(R[:2, 2:] == 0)


class TestPredict:
    def test_static_state_unchanged(self):
        cfg = NoiseConfig(sigma_accel=0.0)
        track = fresh_track(cfg)
        x0 = track.state.as_vector()
        predict(track, build_F(DT), build_Q(cfg, DT))
        assert np.allclose(track.state.as_vector(), x0)

    def test_trace_grows(self, noise):
        track = fresh_track(noise)
        before = np.trace(track.P)
        predict(track, build_F(DT), build_Q(noise, DT))
        assert np.trace(track.P) > before

    def test_ten_steps_match_closed_form(self, noise):
        track = fresh_track(noise, x=1.0, y=2.0, vx=0.5, vy=-0.2)
        F = build_F(DT)
        Q = build_Q(noise, DT)
        x0 = track.state.as_vector()
        P0 = track.P.copy()
        for _ in range(10):
            predict(track, F, Q)
        F10 = np.linalg.matrix_power(F, 10)
        want_x = F10 @ x0
        want_P = F10 @ P0 @ F10.T
        for k in range(10):
            Fk = np.linalg.matrix_power(F, k)
            want_P += Fk @ Q @ Fk.T
        assert np.allclose(track.state.as_vector(), want_x, atol=1e-12)
        assert np.allclose(track.P, want_P, atol=1e-10)


class TestUpdate:
    def test_perfect_measurement(self, noise):
        track = fresh_track(noise)
        z = ExtensionObservation(mu_x=0.4, mu_y=2.2, length=0.6, width=0.2,
                                 angle=0.5)
        update(track, z, observation_matrix(), np.eye(5) * 1e-18)
        assert track.state.x == pytest.approx(0.4, abs=1e-6)
        assert track.state.y == pytest.approx(2.2, abs=1e-6)
        assert track.state.length == pytest.approx(0.6, abs=1e-6)

    def test_uninformative_measurement(self, noise):
        track = fresh_track(noise, x=0.3, y=1.8)
        x0 = track.state.as_vector()
        z = ExtensionObservation(mu_x=5.0, mu_y=5.0, length=2.0, width=1.0,
                                 angle=1.0)
        update(track, z, observation_matrix(), np.eye(5) * 1e12)
        assert np.allclose(track.state.as_vector(), x0, rtol=1e-6, atol=1e-6)

    def test_scalar_gain_cross_check(self, noise):
        # diagonal P and R decouple the position coordinates into scalar
        # recursions with gain k = p / (p + r)
        track = fresh_track(noise, x=1.0, y=2.0)
        track.P = np.diag([0.04, 0.09, 1, 1, 0.01, 0.01, 0.1])
        R = np.diag([0.02, 0.05, 1.0, 1.0, 1.0])
        z = ExtensionObservation(mu_x=1.5, mu_y=1.6,
                                 length=track.state.length,
                                 width=track.state.width,
                                 angle=track.state.angle)
        kx = 0.04 / (0.04 + 0.02)
        ky = 0.09 / (0.09 + 0.05)
        want_x = 1.0 + kx * 0.5
        want_y = 2.0 + ky * (-0.4)
        update(track, z, observation_matrix(), R)
        assert track.state.x == pytest.approx(want_x, rel=1e-12)
        assert track.state.y == pytest.approx(want_y, rel=1e-12)

    def test_singular_innovation_rejected(self, noise):
        track = fresh_track(noise)
        track.P = np.zeros((7, 7))
        z = ExtensionObservation(mu_x=0, mu_y=2, length=0.5, width=0.2,
                                 angle=0.0)
        with pytest.raises(np.linalg.LinAlgError):
            update(track, z, observation_matrix(), np.zeros((5, 5)))

    def test_axis_order_enforced(self, noise):
        track = fresh_track(noise)
        z = ExtensionObservation(mu_x=0.0, mu_y=2.0, length=0.5, width=0.45,
                                 angle=0.0)
        # push width above length with a tight measurement
        track.state.length = 0.2
        track.state.width = 0.18
        z = ExtensionObservation(mu_x=0.0, mu_y=2.0, length=0.19, width=0.6,
                                 angle=0.0)
        update(track, z, observation_matrix(), np.eye(5) * 1e-12)
        assert track.state.length >= track.state.width
        assert 0.0 <= track.state.angle < math.pi

    def test_orientation_wrap(self):
        assert wrap_orientation_residual(math.pi / 2) == pytest.approx(math.pi / 2)
        assert wrap_orientation_residual(-math.pi / 2) == pytest.approx(math.pi / 2)
        assert wrap_orientation_residual(0.6) == pytest.approx(0.6)
        assert wrap_orientation_residual(2.0) == pytest.approx(2.0 - math.pi)


class TestFilterProperties:
    def test_covariance_stays_symmetric_psd(self, noise):
        rng = np.random.default_rng(0)
        track = fresh_track(noise, x=0.5, y=2.0)
        F = build_F(DT)
        Q = build_Q(noise, DT)
        H = observation_matrix()
        for i in range(10_000):
            predict(track, F, Q)
            if i % 2 == 0:
                z = ExtensionObservation(
                    mu_x=track.state.x + rng.normal(0, 0.05),
                    mu_y=np.clip(track.state.y + rng.normal(0, 0.05), 0.5, 6),
                    length=abs(rng.normal(0.5, 0.05)),
                    width=abs(rng.normal(0.25, 0.05)),
                    angle=rng.uniform(0, math.pi))
                R = measurement_covariance(track.state, noise)
                update(track, z, H, R)
                # keep the walk bounded
                track.state.x = float(np.clip(track.state.x, -3, 3))
                track.state.y = float(np.clip(track.state.y, 0.5, 6))
                track.state.vx = float(np.clip(track.state.vx, -2, 2))
                track.state.vy = float(np.clip(track.state.vy, -2, 2))
            assert np.allclose(track.P, track.P.T, atol=1e-12)
        assert np.linalg.eigvalsh(track.P).min() >= -1e-9

    def test_block_decoupling_exact(self, noise):
        track = fresh_track(noise)
        assert np.all(track.P[:4, 4:] == 0)
        F = build_F(DT)
        Q = build_Q(noise, DT)
        H = observation_matrix()
        rng = np.random.default_rng(1)
        for _ in range(50):
            predict(track, F, Q)
            z = ExtensionObservation(
                mu_x=track.state.x + rng.normal(0, 0.03),
                mu_y=track.state.y + rng.normal(0, 0.03),
                length=0.5, width=0.25, angle=0.2)
            update(track, z, H, measurement_covariance(track.state, noise))
            assert np.all(track.P[:4, 4:] == 0)
            assert np.all(track.P[4:, :4] == 0)

    def test_nees_consistency(self, noise):
        # matched linear-Gaussian simulation: the filter's normalized
        # estimation error over 500 runs must hug the 95% chi-square band
        runs = 500
        steps = 60
        dof = 4
        rng = np.random.default_rng(7)
        F4 = build_F(DT)[:4, :4]
        Q4 = build_Q(noise, DT)[:4, :4]
        R2 = measurement_covariance(TrackState(x=0.0, y=2.5), noise)[:2, :2]
        H2 = np.zeros((2, 4))
        H2[0, 0] = H2[1, 1] = 1.0
        P0 = np.diag([0.01, 0.01, 1.0, 1.0])
        sq_Q = np.linalg.cholesky(Q4 + 1e-15 * np.eye(4))
        sq_R = np.linalg.cholesky(R2)
        sq_P0 = np.linalg.cholesky(P0)

        nees = np.zeros((runs, steps))
        for run in range(runs):
            truth = np.array([0.0, 2.5, 0.4, -0.2])
            est = truth + sq_P0 @ rng.standard_normal(4)
            P = P0.copy()
            for k in range(steps):
                truth = F4 @ truth + sq_Q @ rng.standard_normal(4)
                est = F4 @ est
                P = F4 @ P @ F4.T + Q4
                z = H2 @ truth + sq_R @ rng.standard_normal(2)
                S = H2 @ P @ H2.T + R2
                K = P @ H2.T @ np.linalg.inv(S)
                est = est + K @ (z - H2 @ est)
                ImKH = np.eye(4) - K @ H2
                P = ImKH @ P @ ImKH.T + K @ R2 @ K.T
                err = truth - est
                nees[run, k] = err @ np.linalg.solve(P, err)
        mean_nees = nees.mean(axis=0)
        lo = chi2.ppf(0.025, dof * runs) / runs
        hi = chi2.ppf(0.975, dof * runs) / runs
        coverage = np.mean((mean_nees >= lo) & (mean_nees <= hi))
        assert coverage >= 0.93
