"""Skeleton topology and pose sequence containers.

Conventions: 2D poses are (T, J, 2) pixel arrays, 3D poses are (T, J, 3)
millimeter arrays in camera coordinates (+Z into the scene). All containers
freeze their arrays after construction and are safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError


def _frozen(a, shape_name, ndim, last):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != ndim or a.shape[-1] != last:
        raise ShapeMismatchError(shape_name, f"(T, J, {last})", a.shape)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{shape_name} contains nonfinite coordinates")
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint tree with per-bone template lengths in millimeters."""

    parent: tuple            # per-joint parent index, -1 for the root
    root_index: int
    template_bone_lengths: dict = field(default=None)  # joint -> length, non-root joints

    def __post_init__(self):
        parent = tuple(int(p) for p in self.parent)
        object.__setattr__(self, "parent", parent)
        J = len(parent)
        if parent[self.root_index] != -1:
            raise ValueError("root joint must have parent -1")
        # every joint must reach the root without cycles
        for j in range(J):
            seen, k = set(), j
            while k != self.root_index:
                if k in seen or not (0 <= k < J):
                    raise ValueError(f"parent links do not form a tree (joint {j})")
                seen.add(k)
                k = parent[k]
        if self.template_bone_lengths is not None:
            lengths = dict(self.template_bone_lengths)
            if set(lengths) != set(self.non_root_joints):
                raise ValueError("template lengths must cover exactly the non-root joints")
            if any(v <= 0 for v in lengths.values()):
                raise ValueError("every template bone length must be > 0")
            object.__setattr__(self, "template_bone_lengths", lengths)

    @property
    def num_joints(self):
        return len(self.parent)

    @property
    def non_root_joints(self):
        return [j for j in range(len(self.parent)) if j != self.root_index]


# H3.6M 17-joint order: pelvis, R hip/knee/ankle, L hip/knee/ankle,
# spine, thorax, neck, head, L shoulder/elbow/wrist, R shoulder/elbow/wrist.
H36M_PARENTS = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)
H36M_BONE_LENGTHS_MM = {
    1: 130.0, 2: 450.0, 3: 440.0,      # right leg
    4: 130.0, 5: 450.0, 6: 440.0,      # left leg
    7: 230.0, 8: 260.0,                # spine segments
    9: 120.0, 10: 180.0,               # neck, head
    11: 180.0, 12: 280.0, 13: 250.0,   # left arm
    14: 180.0, 15: 280.0, 16: 250.0,   # right arm
}


def default_skeleton():
    return SkeletonSpec(parent=H36M_PARENTS, root_index=0,
                        template_bone_lengths=H36M_BONE_LENGTHS_MM)


@dataclass(frozen=True)
class PoseSequence2D:
    coords: np.ndarray  # (T, J, 2) pixels

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen(self.coords, "PoseSequence2D", 3, 2))

    @property
    def frames(self):
        return self.coords.shape[0]

    @property
    def num_joints(self):
        return self.coords.shape[1]


@dataclass(frozen=True)
class PoseSequence3D:
    coords: np.ndarray  # (T, J, 3) millimeters, camera frame

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen(self.coords, "PoseSequence3D", 3, 3))

    @property
    def frames(self):
        return self.coords.shape[0]

    @property
    def num_joints(self):
        return self.coords.shape[1]


@dataclass(frozen=True)
class PairedDataset:
    """List of (2D, 3D) windows with identical T and J."""

    entries: tuple  # of (PoseSequence2D, PoseSequence3D)

    def __post_init__(self):
        entries = tuple(self.entries)
        for i, (p2, p3) in enumerate(entries):
            if p2.frames != p3.frames or p2.num_joints != p3.num_joints:
                raise ShapeMismatchError(f"PairedDataset entry {i}",
                                         (p2.frames, p2.num_joints),
                                         (p3.frames, p3.num_joints))
        object.__setattr__(self, "entries", entries)

    @property
    def size(self):
        return len(self.entries)


@dataclass(frozen=True)
class UnpairedDataset:
    """2D-only windows (the target-domain training view)."""

    entries: tuple  # of PoseSequence2D

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def size(self):
        return len(self.entries)


def _check_joints(pose, skel, what):
    if pose.num_joints != skel.num_joints:
        raise ShapeMismatchError(what, f"J={skel.num_joints}", f"J={pose.num_joints}")


def bone_lengths_2d(pose: PoseSequence2D, skel: SkeletonSpec) -> np.ndarray:
    """Per-frame pixel length of every bone (child joint to its parent).

    Returns (T, J-1) in skeleton non-root joint order.
    """
    _check_joints(pose, skel, "bone_lengths_2d")
    joints = skel.non_root_joints
    parents = [skel.parent[j] for j in joints]
    diff = pose.coords[:, joints, :] - pose.coords[:, parents, :]
    return np.linalg.norm(diff, axis=-1)


def bone_lengths_3d(pose: PoseSequence3D, skel: SkeletonSpec) -> np.ndarray:
    """Per-frame millimeter length of every bone. Returns (T, J-1)."""
    _check_joints(pose, skel, "bone_lengths_3d")
    joints = skel.non_root_joints
    parents = [skel.parent[j] for j in joints]
    diff = pose.coords[:, joints, :] - pose.coords[:, parents, :]
    return np.linalg.norm(diff, axis=-1)


def root_relative(pose: PoseSequence3D, skel: SkeletonSpec) -> PoseSequence3D:
    """Subtract the root joint per frame; the root lands at (0, 0, 0)."""
    _check_joints(pose, skel, "root_relative")
    root = pose.coords[:, skel.root_index:skel.root_index + 1, :]
    return PoseSequence3D(pose.coords - root)


def concat_datasets(a: PairedDataset, b: PairedDataset) -> PairedDataset:
    """Concatenate two paired datasets, a's entries first."""
    if a.size and b.size:
        ja = a.entries[0][0].num_joints
        jb = b.entries[0][0].num_joints
        if ja != jb:
            raise ShapeMismatchError("concat_datasets", f"J={ja}", f"J={jb}")
    return PairedDataset(a.entries + b.entries)
