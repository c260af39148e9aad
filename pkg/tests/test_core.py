import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsplat.core import quaternion as quat
from dynsplat.core import sh
from dynsplat.core.gaussians import Camera, GaussianSet, covariance_from_rotation_scale, look_at
from dynsplat.errors import InvalidInputError


def random_unit_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


unit_quats = st.builds(
    lambda seed: random_unit_quat(np.random.default_rng(seed)),
    st.integers(0, 2**32 - 1),
)
pos_scales = st.builds(
    lambda seed: np.exp(np.random.default_rng(seed).uniform(-2, 2, size=3)),
    st.integers(0, 2**32 - 1),
)


class TestQuaternion:
    def test_identity_multiply(self):
        b = random_unit_quat(np.random.default_rng(0))
        assert np.allclose(quat.multiply(quat.identity(), b), b)

    def test_inverse_multiply(self):
        a = random_unit_quat(np.random.default_rng(1))
        assert np.allclose(quat.multiply(a, quat.conjugate(a)), quat.identity(), atol=1e-12)

    def test_compose_matches_matrix_product(self):
        # two 90-degree z rotations compose to a 180-degree z rotation
        a = quat.from_axis_angle([0, 0, 1], np.pi / 2)
        ab = quat.multiply(a, a)
        expected = quat.to_matrix(quat.from_axis_angle([0, 0, 1], np.pi))
        assert np.allclose(quat.to_matrix(ab), expected, atol=1e-12)

    @given(unit_quats, unit_quats)
    @settings(max_examples=50, deadline=None)
    def test_multiply_matrix_homomorphism(self, a, b):
        lhs = quat.to_matrix(quat.multiply(a, b))
        rhs = quat.to_matrix(a) @ quat.to_matrix(b)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9

    @given(unit_quats)
    @settings(max_examples=50, deadline=None)
    def test_to_matrix_orthonormal(self, q):
        m = quat.to_matrix(q)
        assert np.max(np.abs(m @ m.T - np.eye(3))) <= 1e-7
        assert abs(np.linalg.det(m) - 1.0) <= 1e-7

    @given(unit_quats)
    @settings(max_examples=50, deadline=None)
    def test_double_cover(self, q):
        assert np.array_equal(quat.to_matrix(q), quat.to_matrix(-q))

    def test_normalize(self):
        q = np.array([2.0, 0, 0, 0])
        assert abs(np.linalg.norm(quat.normalize(q)) - 1.0) <= 1e-9
        with pytest.raises(InvalidInputError):
            quat.normalize(np.zeros(4))

    @given(unit_quats)
    @settings(max_examples=25, deadline=None)
    def test_from_matrix_roundtrip(self, q):
        q2 = quat.from_matrix(quat.to_matrix(q))
        # same rotation up to sign
        assert min(np.max(np.abs(q2 - q)), np.max(np.abs(q2 + q))) <= 1e-9

    def test_rotate_matches_matrix(self):
        rng = np.random.default_rng(7)
        q = random_unit_quat(rng)
        v = rng.normal(size=(5, 3))
        assert np.allclose(quat.rotate(q, v), v @ quat.to_matrix(q).T, atol=1e-12)

    def test_to_matrix_backward_finite_difference(self):
        rng = np.random.default_rng(3)
        q = random_unit_quat(rng)
        g = rng.normal(size=(3, 3))
        analytic = quat.to_matrix_backward(q, g)
        eps = 1e-6
        for i in range(4):
            dq = np.zeros(4)
            dq[i] = eps
            fd = (np.sum(quat.to_matrix(q + dq) * g) - np.sum(quat.to_matrix(q - dq) * g)) / (2 * eps)
            assert abs(analytic[i] - fd) <= 1e-6

    def test_multiply_backward_finite_difference(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=4), rng.normal(size=4)
        g = rng.normal(size=4)
        ga, gb = quat.multiply_backward(a, b, g)
        eps = 1e-6
        for i in range(4):
            d = np.zeros(4)
            d[i] = eps
            fd_a = (quat.multiply(a + d, b) - quat.multiply(a - d, b)) @ g / (2 * eps)
            fd_b = (quat.multiply(a, b + d) - quat.multiply(a, b - d)) @ g / (2 * eps)
            assert abs(ga[i] - fd_a) <= 1e-6
            assert abs(gb[i] - fd_b) <= 1e-6


class TestCovariance:
    def test_identity_case(self):
        sig = covariance_from_rotation_scale(quat.identity(), np.ones(3))
        assert np.allclose(sig, np.eye(3), atol=1e-12)

    def test_diagonal_case(self):
        sig = covariance_from_rotation_scale(quat.identity(), np.array([2.0, 3.0, 4.0]))
        assert np.allclose(sig, np.diag([4.0, 9.0, 16.0]), atol=1e-12)

    def test_axis_permutation_rotation(self):
        # 90 deg about z maps the x axis onto y: R S S^T R^T permutes the
        # variances, diag(4,1,1) -> diag(1,4,1).
        q = quat.from_axis_angle([0, 0, 1], np.pi / 2)
        sig = covariance_from_rotation_scale(q, np.array([2.0, 1.0, 1.0]))
        assert np.allclose(sig, np.diag([1.0, 4.0, 1.0]), atol=1e-9)

    def test_rejects_bad_inputs(self):
        with pytest.raises(InvalidInputError):
            covariance_from_rotation_scale(np.array([1.0, 1.0, 0, 0]), np.ones(3))
        with pytest.raises(InvalidInputError):
            covariance_from_rotation_scale(quat.identity(), np.array([1.0, -1.0, 1.0]))

    @given(unit_quats, pos_scales)
    @settings(max_examples=50, deadline=None)
    def test_symmetric_psd_eigenvalues(self, q, s):
        sig = covariance_from_rotation_scale(q, s)
        assert np.max(np.abs(sig - sig.T)) <= 1e-12
        ev = np.linalg.eigvalsh(sig)
        assert ev.min() >= -1e-12
        assert np.allclose(np.sort(ev), np.sort(s**2), atol=1e-9)

    @given(unit_quats, pos_scales)
    @settings(max_examples=25, deadline=None)
    def test_sign_invariance(self, q, s):
        assert np.array_equal(
            covariance_from_rotation_scale(q, s), covariance_from_rotation_scale(-q, s)
        )


class TestSphericalHarmonics:
    def test_degree0_view_independent(self):
        c = 0.75
        coeffs = np.full((1, 3), c)
        for d in [np.array([0, 0, 1.0]), np.array([1.0, 0, 0]), np.array([0, -1.0, 0])]:
            rgb = sh.sh_evaluate(coeffs, d, 0)
            assert np.allclose(rgb, c * sh.C0 + 0.5, atol=1e-12)

    def test_all_zero_coeffs(self):
        rgb = sh.sh_evaluate(np.zeros((4, 3)), np.array([0, 0, 1.0]), 1)
        assert np.allclose(rgb, 0.5)

    def test_degree1_z_band_symmetry(self):
        # only the linear-in-z band set: values at +z and -z mirror about 0.5
        coeffs = np.zeros((4, 3))
        coeffs[2] = 0.3
        up = sh.sh_evaluate(coeffs, np.array([0, 0, 1.0]), 1)
        down = sh.sh_evaluate(coeffs, np.array([0, 0, -1.0]), 1)
        assert np.allclose(up + down, 1.0, atol=1e-12)
        assert up[0] > 0.5 > down[0]

    def test_clamps_below_zero(self):
        coeffs = np.zeros((1, 3))
        coeffs[0] = -10.0
        rgb = sh.sh_evaluate(coeffs, np.array([0, 0, 1.0]), 0)
        assert np.all(rgb == 0.0)

    def test_rejects_non_unit_direction(self):
        with pytest.raises(InvalidInputError):
            sh.sh_evaluate(np.zeros((1, 3)), np.array([0, 0, 2.0]), 0)

    def test_basis_backward_finite_difference(self):
        rng = np.random.default_rng(5)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        g = sh.sh_basis_backward(d, 3)
        eps = 1e-6
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = eps
            fd = (sh.sh_basis(d + step, 3) - sh.sh_basis(d - step, 3)) / (2 * eps)
            assert np.max(np.abs(g[:, axis] - fd)) <= 1e-6


class TestSceneTypes:
    def test_gaussian_set_validation(self):
        g = GaussianSet(
            mu=np.zeros((2, 3)),
            q=np.tile(quat.identity(), (2, 1)),
            s=np.ones((2, 3)),
            sigma=np.array([0.5, 1.0]),
            sh=np.zeros((2, 1, 3)),
        )
        g.validate()
        assert g.sh_degree == 0
        bad = g.copy()
        bad.s[0, 0] = 0.0
        with pytest.raises(InvalidInputError):
            bad.validate()

    def test_camera_validation_and_center(self):
        cam = Camera(
            world_to_camera=look_at([0, 0, -5.0], [0, 0, 0]),
            focal=[100.0, 100.0],
            principal_point=[32.0, 32.0],
            width=64,
            height=64,
            near=0.1,
            far=50.0,
        )
        cam.validate()
        assert np.allclose(cam.camera_center, [0, 0, -5.0], atol=1e-12)
        bad = Camera(np.eye(4) * 2, [1, 1], [0, 0], 4, 4)
        with pytest.raises(InvalidInputError):
            bad.validate()

    def test_look_at_points_camera_at_target(self):
        w2c = look_at([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        p = w2c[:3, :3] @ np.zeros(3) + w2c[:3, 3]
        # target lands on the +z axis in camera space
        assert abs(p[0]) < 1e-12 and abs(p[1]) < 1e-12 and p[2] > 0
