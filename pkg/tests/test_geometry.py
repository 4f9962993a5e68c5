import numpy as np
import pytest

from placelab.geometry import (RigidTransform, UnitQuaternion,
                               geodesic_distance, interpolate_transform,
                               rotation_angle_about_axis,
                               sample_uniform_rotation, slerp, swing_twist)

Z = np.array([0.0, 0.0, 1.0])
X = np.array([1.0, 0.0, 0.0])


def rot(axis, degrees):
    return UnitQuaternion.from_axis_angle(axis, np.deg2rad(degrees))


def random_quaternions(n, seed=0):
    rng = np.random.default_rng(seed)
    return [sample_uniform_rotation(rng) for _ in range(n)]


def uniform_angle_mean_oracle():
    # Independent oracle: quadrature of theta * p(theta), p = (1 - cos) / pi.
    theta = np.linspace(0.0, np.pi, 200001)
    p = (1.0 - np.cos(theta)) / np.pi
    return np.trapezoid(theta * p, theta)


class TestUniformRotation:
    def test_mean_angle_matches_density(self):
        rng = np.random.default_rng(7)
        angles = np.array([sample_uniform_rotation(rng).angle()
                           for _ in range(100_000)])
        oracle = uniform_angle_mean_oracle()
        assert abs(oracle - 2.2074) < 5e-4  # pi/2 + 2/pi
        assert abs(angles.mean() - oracle) < 0.02

    def test_deterministic_given_seed(self):
        q0 = sample_uniform_rotation(np.random.default_rng(123))
        q1 = sample_uniform_rotation(np.random.default_rng(123))
        assert np.array_equal(q0.wxyz, q1.wxyz)

    def test_angle_cdf_kolmogorov(self):
        rng = np.random.default_rng(11)
        angles = np.sort([sample_uniform_rotation(rng).angle()
                          for _ in range(100_000)])
        cdf = (angles - np.sin(angles)) / np.pi  # closed-form CDF
        empirical = np.arange(1, len(angles) + 1) / len(angles)
        ks = np.max(np.abs(cdf - empirical))
        assert ks < 0.01

    def test_canonical_sign(self):
        for q in random_quaternions(200, seed=3):
            assert q.w >= 0.0


class TestSlerp:
    def test_identical_endpoints(self):
        q = rot(Z, 33.0)
        assert geodesic_distance(slerp(q, q, 0.5), q) < 1e-12

    def test_single_axis_half(self):
        got = slerp(UnitQuaternion.identity(), rot(Z, 90.0), 0.5)
        assert geodesic_distance(got, rot(Z, 45.0)) < 1e-12

    def test_single_axis_third(self):
        got = slerp(UnitQuaternion.identity(), rot(X, 120.0), 1.0 / 3.0)
        assert geodesic_distance(got, rot(X, 40.0)) < 1e-12

    def test_endpoint_exactness(self):
        for q0, q1 in zip(random_quaternions(50, 1), random_quaternions(50, 2)):
            assert np.max(np.abs(slerp(q0, q1, 0.0).wxyz - q0.wxyz)) < 1e-12
            assert np.max(np.abs(slerp(q0, q1, 1.0).wxyz - q1.wxyz)) < 1e-12

    def test_geodesic_proportionality(self):
        rng = np.random.default_rng(5)
        for q0, q1 in zip(random_quaternions(200, 8), random_quaternions(200, 9)):
            alpha = float(rng.random())
            full = geodesic_distance(q0, q1)
            part = geodesic_distance(q0, slerp(q0, q1, alpha))
            assert abs(part - alpha * full) < 1e-9

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            slerp(rot(Z, 10.0), rot(Z, 20.0), 1.5)


class TestGeodesicDistance:
    def test_zero_for_equal(self):
        q = rot(Z, 71.0)
        assert geodesic_distance(q, q) == 0.0

    def test_pi_for_opposite(self):
        assert abs(geodesic_distance(UnitQuaternion.identity(),
                                     rot(X, 180.0)) - np.pi) < 1e-12

    def test_same_axis_difference(self):
        assert abs(geodesic_distance(rot(Z, 30.0), rot(Z, 120.0))
                   - np.pi / 2) < 1e-12

    def test_triangle_inequality(self):
        qa = random_quaternions(1000, 21)
        qb = random_quaternions(1000, 22)
        qc = random_quaternions(1000, 23)
        for a, b, c in zip(qa, qb, qc):
            assert geodesic_distance(a, c) <= (geodesic_distance(a, b)
                                               + geodesic_distance(b, c) + 1e-12)


class TestRigidAlgebra:
    def test_identity_apply(self):
        p = np.array([1.0, 2.0, 3.0])
        assert np.allclose(RigidTransform.identity().apply(p), p)

    def test_rotation_apply(self):
        t = RigidTransform(rot(Z, 90.0), np.zeros(3))
        assert np.allclose(t.apply(np.array([1.0, 0.0, 0.0])),
                           [0.0, 1.0, 0.0], atol=1e-12)

    def test_compose_inverse_is_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            t = RigidTransform(sample_uniform_rotation(rng),
                               rng.normal(size=3))
            round_trip = t.compose(t.inverse())
            assert geodesic_distance(round_trip.rotation,
                                     UnitQuaternion.identity()) < 1e-9
            assert np.linalg.norm(round_trip.translation) < 1e-9

    def test_compose_acts_right_to_left(self):
        rng = np.random.default_rng(6)
        a = RigidTransform(sample_uniform_rotation(rng), rng.normal(size=3))
        b = RigidTransform(sample_uniform_rotation(rng), rng.normal(size=3))
        p = rng.normal(size=3)
        assert np.allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)

    def test_associativity(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            a, b, c = (RigidTransform(sample_uniform_rotation(rng),
                                      rng.normal(size=3)) for _ in range(3))
            p = rng.normal(size=3)
            left = a.compose(b.compose(c)).apply(p)
            right = a.compose(b).compose(c).apply(p)
            assert np.linalg.norm(left - right) < 1e-9


class TestInterpolateTransform:
    def test_endpoints(self):
        ta = RigidTransform(rot(Z, 13.0), np.array([0.1, 0.2, 0.3]))
        tb = RigidTransform(rot(X, 77.0), np.array([-1.0, 0.0, 2.0]))
        for alpha, ref in ((0.0, ta), (1.0, tb)):
            got = interpolate_transform(ta, tb, alpha)
            assert geodesic_distance(got.rotation, ref.rotation) < 1e-12
            assert np.allclose(got.translation, ref.translation)

    def test_pure_translation(self):
        ta = RigidTransform.identity()
        tb = RigidTransform.from_translation([1.0, 0.0, 0.0])
        got = interpolate_transform(ta, tb, 0.25)
        assert np.allclose(got.translation, [0.25, 0.0, 0.0])

    def test_mixed(self):
        ta = RigidTransform(rot(Z, 0.0), np.zeros(3))
        tb = RigidTransform(rot(Z, 90.0), np.array([2.0, 0.0, 0.0]))
        got = interpolate_transform(ta, tb, 0.5)
        assert geodesic_distance(got.rotation, rot(Z, 45.0)) < 1e-12
        assert np.allclose(got.translation, [1.0, 0.0, 0.0])


class TestSwingTwist:
    def test_pure_twist(self):
        swing, twist = swing_twist(rot(Z, 50.0), Z)
        assert geodesic_distance(swing, UnitQuaternion.identity()) < 1e-12
        assert geodesic_distance(twist, rot(Z, 50.0)) < 1e-12

    def test_pure_swing(self):
        swing, twist = swing_twist(rot(X, 30.0), Z)
        assert geodesic_distance(twist, UnitQuaternion.identity()) < 1e-12
        assert geodesic_distance(swing, rot(X, 30.0)) < 1e-12

    def test_reconstruction(self):
        for q in random_quaternions(1000, seed=17):
            swing, twist = swing_twist(q, Z)
            assert geodesic_distance(swing.compose(twist), q) < 1e-9

    def test_twist_is_about_axis(self):
        for q in random_quaternions(100, seed=18):
            _, twist = swing_twist(q, Z)
            vec = twist.vector
            assert abs(vec[0]) < 1e-12 and abs(vec[1]) < 1e-12

    def test_signed_angle(self):
        assert abs(rotation_angle_about_axis(rot(Z, 50.0), Z)
                   - np.deg2rad(50.0)) < 1e-12
        assert abs(rotation_angle_about_axis(rot(Z, -50.0), Z)
                   + np.deg2rad(50.0)) < 1e-12
