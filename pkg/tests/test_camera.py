import numpy as np
import pytest

from poselift.camera import (CameraIntrinsics, augment_source, lift_with_depth,
                             place_root_relative, project,
                             sample_augmentation_pairs)
from poselift.errors import GeometryError
from poselift.skeleton import (PairedDataset, PoseSequence2D, PoseSequence3D,
                               UnpairedDataset, bone_lengths_2d, root_relative)
from poselift.synth import SyntheticDomainSpec, generate_domain

from conftest import random_pose3d_coords


class TestProject:
    def test_optical_axis(self):
        cam = CameraIntrinsics(800, 800, 0, 0, 1000, 1000)
        for z in (1.0, 123.0, 9999.0):
            pose = PoseSequence3D(np.array([[[0.0, 0.0, z], [0.0, 0.0, z]]]))
            uv = project(pose, cam).coords
            np.testing.assert_allclose(uv, 0.0, atol=1e-12)

    def test_hand_pinhole_case(self, cam):
        pose = PoseSequence3D(np.array([[[100.0, -50.0, 2000.0],
                                         [100.0, -50.0, 2000.0]]]))
        uv = project(pose, cam).coords
        np.testing.assert_allclose(uv[0, 0], [550.0, 475.0])

    def test_depth_scale_invariance(self, cam, np_rng):
        coords = random_pose3d_coords(np_rng, 2, 17)
        base = project(PoseSequence3D(coords), cam).coords
        for lam in (0.5, 3.0, 17.0):
            scaled = project(PoseSequence3D(coords * lam), cam).coords
            np.testing.assert_allclose(scaled, base, rtol=1e-9, atol=1e-9)

    def test_nonpositive_depth_identifies_location(self, cam):
        coords = np.full((2, 3, 3), 100.0)
        coords[1, 2, 2] = -5.0
        with pytest.raises(GeometryError) as exc:
            project(PoseSequence3D(coords), cam)
        assert exc.value.frame == 1 and exc.value.joint == 2


class TestLiftWithDepth:
    def test_round_trip_exact(self, cam, np_rng):
        uv = PoseSequence2D(np_rng.uniform(0, 1000, (3, 17, 2)))
        depths = np_rng.uniform(1000, 6000, (3, 17))
        lifted = lift_with_depth(uv, depths, cam)
        back = project(lifted, cam).coords
        np.testing.assert_allclose(back, uv.coords, atol=1e-9)

    def test_optical_axis_case(self, cam):
        uv = PoseSequence2D(np.array([[[500.0, 500.0]]]))
        out = lift_with_depth(uv, np.array([[1500.0]]), cam).coords
        np.testing.assert_allclose(out[0, 0], [0.0, 0.0, 1500.0])

    def test_hand_inverse_case(self, cam):
        uv = PoseSequence2D(np.array([[[550.0, 475.0]]]))
        out = lift_with_depth(uv, np.array([[2000.0]]), cam).coords
        np.testing.assert_allclose(out[0, 0], [100.0, -50.0, 2000.0])

    def test_nonpositive_depth_rejected(self, cam):
        uv = PoseSequence2D(np.zeros((1, 1, 2)))
        with pytest.raises(GeometryError):
            lift_with_depth(uv, np.array([[0.0]]), cam)

    def test_lift_of_projection_recovers_3d(self, cam, np_rng):
        coords = random_pose3d_coords(np_rng, 2, 17)
        pose = PoseSequence3D(coords)
        uv = project(pose, cam)
        recovered = lift_with_depth(uv, coords[:, :, 2], cam).coords
        np.testing.assert_allclose(recovered, coords, atol=1e-6)


def _domain_sample(skel, seed=0, scale=1.0, fx=1100.0, n=4, T=8,
                   z_mm=(3000.0, 5000.0), amp=0.35):
    cam = CameraIntrinsics(fx, fx, 500.0, 500.0, 1000, 1000)
    spec = SyntheticDomainSpec(camera=cam, scale_multiplier=scale,
                               motion_amplitude=amp,
                               root_box_mm=((-600.0, 600.0), (-400.0, 400.0), z_mm))
    rng = np.random.default_rng(seed)
    return generate_domain(spec, skel, n, T, rng), cam


class TestAugmentSource:
    def test_pair_is_projection_consistent(self, skel):
        (paired, unpaired), cam = _domain_sample(skel)
        src3d = root_relative(paired.entries[0][1], skel)
        x2d, y3d = augment_source(unpaired.entries[1], src3d, skel, cam)
        np.testing.assert_allclose(x2d.coords, project(y3d, cam).coords, atol=1e-12)

    def test_root_pixel_alignment(self, skel):
        (paired, unpaired), cam = _domain_sample(skel, seed=3)
        target2d = unpaired.entries[2]
        src3d = root_relative(paired.entries[0][1], skel)
        x2d, _ = augment_source(target2d, src3d, skel, cam)
        np.testing.assert_allclose(x2d.coords[:, skel.root_index],
                                   target2d.coords[:, skel.root_index], atol=1e-6)

    def test_self_consistent_translation_recovery(self, skel):
        # project a root-centered pose placed at a known translation, then
        # check the augmentation puts the root pixel exactly back
        (paired, _), cam = _domain_sample(skel, seed=5)
        centered = root_relative(paired.entries[0][1], skel)
        t_star = np.array([250.0, -120.0, 4200.0])
        placed = PoseSequence3D(centered.coords + t_star)
        target2d = project(placed, cam)
        x2d_aug, _ = augment_source(target2d, centered, skel, cam)
        np.testing.assert_allclose(x2d_aug.coords[:, skel.root_index],
                                   target2d.coords[:, skel.root_index], atol=1e-6)

    def test_2d_scale_matches_target(self, skel):
        # shallow pose relative to depth, where the pinhole first-order
        # approximation behind the scale equation is accurate
        (paired, unpaired), cam = _domain_sample(skel, seed=7, z_mm=(10500.0, 13000.0), amp=0.15)
        target2d = unpaired.entries[3]
        src3d = root_relative(paired.entries[1][1], skel)
        x2d_aug, _ = augment_source(target2d, src3d, skel, cam)
        s_t = bone_lengths_2d(target2d, skel).mean(axis=1)
        s_aug = bone_lengths_2d(x2d_aug, skel).mean(axis=1)
        np.testing.assert_allclose(s_aug, s_t, rtol=0.05)

    def test_halving_target_scale_doubles_depth(self, skel):
        (paired, unpaired), cam = _domain_sample(skel, seed=9)
        target2d = unpaired.entries[0]
        src3d = root_relative(paired.entries[0][1], skel)
        _, y_base = augment_source(target2d, src3d, skel, cam)
        doubled = PoseSequence2D(
            (target2d.coords - [cam.cx, cam.cy]) * 2 + [cam.cx, cam.cy])
        _, y_doubled = augment_source(doubled, src3d, skel, cam)
        z_base = y_base.coords[:, skel.root_index, 2]
        z_doubled = y_doubled.coords[:, skel.root_index, 2]
        np.testing.assert_allclose(z_doubled, z_base / 2, rtol=1e-9)

    def test_degenerate_target_rejected(self, skel):
        (paired, _), cam = _domain_sample(skel)
        src3d = root_relative(paired.entries[0][1], skel)
        flat = PoseSequence2D(np.full((src3d.frames, 17, 2), 400.0))
        with pytest.raises(GeometryError):
            augment_source(flat, src3d, skel, cam)

    def test_uncentered_source_rejected(self, skel):
        (paired, unpaired), cam = _domain_sample(skel)
        with pytest.raises(ValueError):
            augment_source(unpaired.entries[0], paired.entries[0][1], skel, cam)


class TestPlacement:
    def test_small_extent_scale_error_bound(self, skel):
        # pose extent <= 10% of depth: projected scale within 5% of target
        (paired, unpaired), cam = _domain_sample(skel, seed=11, z_mm=(10500.0, 13000.0), amp=0.15)
        src3d = root_relative(paired.entries[0][1], skel)
        placed = place_root_relative(src3d, unpaired.entries[1], skel, cam)
        extent = np.abs(src3d.coords).max()
        depth = placed.coords[:, skel.root_index, 2].min()
        assert extent <= 0.10 * depth  # sanity on the fixture itself
        s_t = bone_lengths_2d(unpaired.entries[1], skel).mean(axis=1)
        s_p = bone_lengths_2d(project(placed, cam), skel).mean(axis=1)
        assert np.all(np.abs(s_p - s_t) / s_t <= 0.05)


class TestSampleAugmentationPairs:
    def test_single_entry_forced(self, skel):
        (paired, unpaired), _ = _domain_sample(skel, n=1)
        rng = np.random.default_rng(0)
        pairs = sample_augmentation_pairs(paired, unpaired, 10, rng)
        assert pairs == [(0, 0)] * 10

    def test_seed_determinism(self, skel):
        (paired, unpaired), _ = _domain_sample(skel, n=4)
        a = sample_augmentation_pairs(paired, unpaired, 100, np.random.default_rng(42))
        b = sample_augmentation_pairs(paired, unpaired, 100, np.random.default_rng(42))
        assert a == b

    def test_empty_dataset_rejected(self, skel):
        (paired, unpaired), _ = _domain_sample(skel, n=2)
        with pytest.raises(ValueError):
            sample_augmentation_pairs(PairedDataset(()), unpaired, 1,
                                      np.random.default_rng(0))
        with pytest.raises(ValueError):
            sample_augmentation_pairs(paired, UnpairedDataset(()), 1,
                                      np.random.default_rng(0))

    def test_marginals_uniform(self, skel):
        (paired, unpaired), _ = _domain_sample(skel, n=4)
        pairs = sample_augmentation_pairs(paired, unpaired, 10000,
                                          np.random.default_rng(7))
        n, k = 10000, 4
        expected = n / k
        sigma = np.sqrt(n * (1 / k) * (1 - 1 / k))
        for axis in (0, 1):
            counts = np.bincount([p[axis] for p in pairs], minlength=k)
            assert np.all(np.abs(counts - expected) < 3 * sigma)
