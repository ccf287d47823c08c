import numpy as np
import pytest

from densepred.data import SceneSpec, interior_faces, render_scene
from densepred.errors import ConfigurationError
from densepred.geometry import (
    Intrinsics,
    angle_degrees,
    depth_to_points,
    normals_compatibility,
    normals_from_depth_finitediff,
    normals_from_depth_planefit,
    pixel_grid,
    project_points,
    viewing_rays,
)


def _plane_depth(normal, offset, K, height, width):
    """Depth of the plane ``normal . X = offset`` seen through ``K``."""
    rays = viewing_rays(height, width, K)
    return offset / np.einsum("i,ihw->hw", normal, rays)


SLANTED = np.array([0.2, -0.5, -0.8]) / np.linalg.norm([0.2, -0.5, -0.8])


class TestCamera:
    """Tests for intrinsics and back-projection."""

    def test_default_intrinsics(self):
        K = Intrinsics.default_for(64, 48)
        assert (K.fx, K.fy, K.cx, K.cy) == (64.0, 64.0, 31.5, 23.5)

    def test_focal_length_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            Intrinsics(0.0, 1.0, 0.0, 0.0)

    def test_dict_round_trip(self):
        K = Intrinsics(500.0, 510.0, 319.5, 239.5)
        assert Intrinsics.from_dict(K.to_dict()) == K

    def test_projection_inverts_back_projection(self):
        # Arrange
        K = Intrinsics(20.0, 22.0, 7.5, 4.0)
        depth = np.random.default_rng(0).uniform(0.5, 10.0, (9, 16))

        # Act
        u, v = project_points(depth_to_points(depth, K), K)

        # Assert
        grid_u, grid_v = pixel_grid(9, 16)
        np.testing.assert_allclose(u, grid_u, atol=1e-9)
        np.testing.assert_allclose(v, grid_v, atol=1e-9)


class TestPlaneFit:
    """Tests for plane-fit and finite-difference normals."""

    @pytest.mark.parametrize("window", [3, 5, 7])
    def test_recovers_an_exact_plane(self, window):
        # Arrange
        K = Intrinsics.default_for(24, 20)
        depth = _plane_depth(SLANTED, -3.0, K, 20, 24)

        # Act
        fit = normals_from_depth_planefit(depth, K, window=window)

        # Assert
        assert fit.mask.all()
        assert np.abs(fit.normals - SLANTED[:, None, None]).max() < 1e-6

    def test_finite_differences_on_a_plane(self):
        # Arrange
        K = Intrinsics.default_for(24, 20)
        depth = _plane_depth(SLANTED, -3.0, K, 20, 24)

        # Act
        fd = normals_from_depth_finitediff(depth, K)

        # Assert
        assert not fd.mask[0].any() and not fd.mask[:, -1].any()
        assert fd.mask[1:-1, 1:-1].all()
        assert np.abs(fd.normals[:, fd.mask] - SLANTED[:, None]).max() < 1e-6

    def test_normals_face_the_camera(self):
        # Arrange
        K = Intrinsics.default_for(16, 12)
        depth = _plane_depth(-SLANTED, 3.0, K, 12, 16)

        # Act
        fit = normals_from_depth_planefit(depth, K, window=3)

        # Assert
        facing = np.sum(fit.normals * viewing_rays(12, 16, K), axis=0)
        assert np.all(facing < 0)

    @pytest.mark.parametrize("window", [1, 4, 6])
    def test_window_must_be_odd_and_at_least_three(self, window):
        with pytest.raises(ConfigurationError):
            normals_from_depth_planefit(np.ones((5, 5)), Intrinsics.default_for(5, 5), window=window)

    def test_invalid_pixels_are_undefined(self):
        # Arrange
        K = Intrinsics.default_for(8, 8)
        depth = _plane_depth(SLANTED, -3.0, K, 8, 8)
        depth[2, 3] = 0.0
        mask = np.ones((8, 8), dtype=bool)
        mask[5, 5] = False

        # Act
        fit = normals_from_depth_planefit(depth, K, window=3, mask=mask)

        # Assert
        assert not fit.mask[2, 3] and not fit.mask[5, 5]
        assert np.all(fit.normals[:, 2, 3] == 0.0)
        assert fit.mask[4, 4]

    def test_collinear_neighbourhood_is_undefined(self):
        """A single valid row cannot fix a plane."""
        # Arrange
        K = Intrinsics.default_for(9, 5)
        depth = np.full((5, 9), 2.0)
        mask = np.zeros((5, 9), dtype=bool)
        mask[2] = True

        # Act
        fit = normals_from_depth_planefit(depth, K, window=3, mask=mask)

        # Assert
        assert not fit.mask.any()


class TestGeneratedScenes:
    """Fitted normals against the analytic normals of rendered scenes."""

    def test_ground_plane_alone(self):
        # Arrange
        spec = SceneSpec(seed=3, box_count=(0, 0))
        sample, _ = render_scene(spec, np.random.default_rng(3))

        # Act
        fit = normals_from_depth_planefit(sample.depth, sample.intrinsics, mask=sample.mask)

        # Assert
        assert fit.mask.sum() > 0.5 * sample.mask.sum()
        diff = np.abs(fit.normals[:, fit.mask] - sample.normals[:, fit.mask])
        assert diff.max() < 1e-6

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_box_scene_interior(self, seed):
        # Arrange
        sample, face = render_scene(SceneSpec(seed=seed), np.random.default_rng(seed))
        interior = interior_faces(face, radius=1)

        # Act
        fit = normals_from_depth_planefit(sample.depth, sample.intrinsics, window=3, mask=sample.mask)

        # Assert
        pixels = interior & fit.mask
        assert pixels.sum() > 100
        assert angle_degrees(fit.normals, sample.normals)[pixels].mean() < 3.0

    def test_finite_differences_agree_with_plane_fit(self):
        # Arrange
        sample, face = render_scene(SceneSpec(seed=5), np.random.default_rng(5))
        interior = interior_faces(face, radius=1)

        # Act
        fit = normals_from_depth_planefit(sample.depth, sample.intrinsics, window=3, mask=sample.mask)
        fd = normals_from_depth_finitediff(sample.depth, sample.intrinsics, mask=sample.mask)

        # Assert
        pixels = interior & fit.mask & fd.mask
        assert pixels.any()
        assert angle_degrees(fit.normals, fd.normals)[pixels].mean() < 5.0

    def test_interior_faces_erodes_boundaries(self):
        # Arrange
        face = np.zeros((5, 6), dtype=np.int64)
        face[:, 3:] = 4
        face[0, 0] = -1

        # Act
        inside = interior_faces(face, radius=1)

        # Assert
        assert not inside[:, 2].any() and not inside[:, 3].any()
        assert not inside[1, 1]
        assert inside[2, 1] and inside[2, 4]


class TestCompatibility:
    def test_matching_normals_score_zero(self):
        # Arrange
        K = Intrinsics.default_for(16, 12)
        depth = _plane_depth(SLANTED, -3.0, K, 12, 16)
        fit = normals_from_depth_planefit(depth, K, window=3)

        # Act
        score = normals_compatibility(depth, fit.normals, K)

        # Assert
        assert score < 1e-3

    def test_flipped_normals_score_180(self):
        K = Intrinsics.default_for(16, 12)
        depth = _plane_depth(SLANTED, -3.0, K, 12, 16)
        fit = normals_from_depth_planefit(depth, K, window=3)
        assert normals_compatibility(depth, -fit.normals, K) == pytest.approx(180.0, abs=1e-3)

    def test_nothing_defined_is_nan(self):
        K = Intrinsics.default_for(4, 4)
        assert np.isnan(normals_compatibility(np.ones((4, 4)), np.zeros((3, 4, 4)), K))
