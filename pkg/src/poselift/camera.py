"""Pinhole projection, depth-resolved lifting, and target-specified source
augmentation (scale-matched depth placement + root pixel alignment)."""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ShapeMismatchError
from .skeleton import (PairedDataset, PoseSequence2D, PoseSequence3D,
                       SkeletonSpec, UnpairedDataset, bone_lengths_2d,
                       bone_lengths_3d)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor size must be positive")

    @property
    def mean_focal(self):
        return 0.5 * (self.fx + self.fy)


def project(pose: PoseSequence3D, cam: CameraIntrinsics) -> PoseSequence2D:
    """u = fx*X/Z + cx, v = fy*Y/Z + cy. Every joint must have Z > 0."""
    xyz = pose.coords
    bad = np.argwhere(xyz[:, :, 2] <= 0)
    if bad.size:
        t, j = bad[0]
        raise GeometryError("nonpositive depth in projection", frame=int(t), joint=int(j))
    z = xyz[:, :, 2]
    u = cam.fx * xyz[:, :, 0] / z + cam.cx
    v = cam.fy * xyz[:, :, 1] / z + cam.cy
    return PoseSequence2D(np.stack([u, v], axis=-1))


def lift_with_depth(pose2d: PoseSequence2D, depths, cam: CameraIntrinsics) -> PoseSequence3D:
    """Inverse of project given per-joint depths (mm), shape (T, J)."""
    depths = np.asarray(depths, dtype=np.float64)
    if depths.shape != pose2d.coords.shape[:2]:
        raise ShapeMismatchError("lift_with_depth depths", pose2d.coords.shape[:2], depths.shape)
    if np.any(depths <= 0):
        raise GeometryError("nonpositive depth in lift_with_depth")
    x = (pose2d.coords[:, :, 0] - cam.cx) * depths / cam.fx
    y = (pose2d.coords[:, :, 1] - cam.cy) * depths / cam.fy
    return PoseSequence3D(np.stack([x, y, depths], axis=-1))


def placement_translation(target2d: PoseSequence2D, mean_bone_3d,
                          skel: SkeletonSpec, cam: CameraIntrinsics) -> np.ndarray:
    """Per-frame global translation (T, 3) that places a root-centered 3D pose
    so its projected scale matches the target 2D skeleton and its root lands on
    the target root pixel.

    Depth per frame: Z = f_mean * L3d / s2d where L3d is the pose's mean 3D
    bone length (mm) and s2d the target's mean 2D bone length (px).
    """
    s2d = bone_lengths_2d(target2d, skel).mean(axis=1)  # (T,)
    if np.any(s2d <= 0):
        t = int(np.argwhere(s2d <= 0)[0][0])
        raise GeometryError("degenerate target 2D skeleton (zero mean bone length)", frame=t)
    mean_bone_3d = np.broadcast_to(np.asarray(mean_bone_3d, dtype=np.float64), s2d.shape)
    z = cam.mean_focal * mean_bone_3d / s2d
    root_px = target2d.coords[:, skel.root_index, :]
    x = (root_px[:, 0] - cam.cx) * z / cam.fx
    y = (root_px[:, 1] - cam.cy) * z / cam.fy
    return np.stack([x, y, z], axis=-1)


def place_root_relative(pose3d: PoseSequence3D, target2d: PoseSequence2D,
                        skel: SkeletonSpec, cam: CameraIntrinsics) -> PoseSequence3D:
    """Apply the scale-matched placement to a root-centered pose."""
    mean_bone = bone_lengths_3d(pose3d, skel).mean(axis=1)
    t = placement_translation(target2d, mean_bone, skel, cam)
    placed = pose3d.coords + t[:, None, :]
    bad = np.argwhere(placed[:, :, 2] <= 0)
    if bad.size:
        f, j = bad[0]
        raise GeometryError("placement put a joint behind the camera",
                            frame=int(f), joint=int(j))
    return PoseSequence3D(placed)


def augment_source(target2d: PoseSequence2D, source3d: PoseSequence3D,
                   skel: SkeletonSpec, cam_t: CameraIntrinsics):
    """Build one augmented source pair aligned with the target distribution.

    source3d must be root-centered. Returns (x2d_aug, y3d_aug) with
    x2d_aug = project(y3d_aug, cam_t) exactly.
    """
    if target2d.frames != source3d.frames or target2d.num_joints != source3d.num_joints:
        raise ShapeMismatchError("augment_source",
                                 (target2d.frames, target2d.num_joints),
                                 (source3d.frames, source3d.num_joints))
    root = source3d.coords[:, skel.root_index, :]
    if np.max(np.abs(root)) > 1e-6:
        raise ValueError("augment_source expects a root-centered source pose")
    y3d_aug = place_root_relative(source3d, target2d, skel, cam_t)
    x2d_aug = project(y3d_aug, cam_t)
    return x2d_aug, y3d_aug


def sample_augmentation_pairs(source: PairedDataset, target: UnpairedDataset,
                              count: int, rng: np.random.Generator):
    """Draw (source index, target index) pairs i.i.d. uniform."""
    if source.size < 1 or target.size < 1:
        raise ValueError("sample_augmentation_pairs needs nonempty datasets")
    si = rng.integers(0, source.size, size=count)
    ti = rng.integers(0, target.size, size=count)
    return [(int(a), int(b)) for a, b in zip(si, ti)]
