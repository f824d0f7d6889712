"""Synthetic two-domain motion data: band-limited joint motion around a rest
pose, exact bone lengths via forward kinematics, pinhole-consistent 2D."""

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, project
from .errors import GeometryError
from .skeleton import (PairedDataset, PoseSequence3D,
                       SkeletonSpec, UnpairedDataset)

# unit bone directions at rest for the default 17-joint skeleton
# (camera frame: +X right, +Y down, +Z into the scene; arms hang down)
H36M_REST_DIRECTIONS = {
    1: (-1, 0, 0), 2: (0, 1, 0), 3: (0, 1, 0),      # right leg
    4: (1, 0, 0), 5: (0, 1, 0), 6: (0, 1, 0),       # left leg
    7: (0, -1, 0), 8: (0, -1, 0),                   # spine
    9: (0, -1, 0), 10: (0, -1, 0),                  # neck, head
    11: (1, 0, 0), 12: (0, 1, 0), 13: (0, 1, 0),    # left arm
    14: (-1, 0, 0), 15: (0, 1, 0), 16: (0, 1, 0),   # right arm
}


@dataclass(frozen=True)
class SyntheticDomainSpec:
    camera: CameraIntrinsics
    scale_multiplier: float = 1.0
    root_box_mm: tuple = ((-600.0, 600.0), (-400.0, 400.0), (3000.0, 5000.0))
    motion_smoothness: int = 5      # moving-average window, frames
    motion_amplitude: float = 0.35  # direction perturbation scale, unitless
    rest_directions: dict = field(default_factory=lambda: dict(H36M_REST_DIRECTIONS))

    def __post_init__(self):
        if self.scale_multiplier <= 0:
            raise ValueError("scale_multiplier must be positive")
        if self.root_box_mm[2][0] <= 0:
            raise ValueError("root box must lie entirely at Z > 0")


def _topological_order(skel: SkeletonSpec):
    order, placed = [], {skel.root_index}
    pending = set(skel.non_root_joints)
    while pending:
        ready = [j for j in pending if skel.parent[j] in placed]
        order.extend(sorted(ready))
        placed.update(ready)
        pending.difference_update(ready)
    return order


def _smooth_noise(shape, window, rng):
    """Low-pass Gaussian noise via moving-average filtering along axis 0."""
    pad = max(int(window), 1)
    raw = rng.standard_normal((shape[0] + 2 * pad,) + shape[1:])
    kernel = np.ones(pad) / pad
    out = np.apply_along_axis(lambda v: np.convolve(v, kernel, mode="same"), 0, raw)
    # restore roughly unit variance after averaging
    return out[pad:pad + shape[0]] * np.sqrt(pad)


def _synthesize_window(spec: SyntheticDomainSpec, skel: SkeletonSpec, T, rng):
    J = skel.num_joints
    box = np.asarray(spec.root_box_mm)
    # smooth root trajectory between two points in the box
    a = rng.uniform(box[:, 0], box[:, 1])
    b = rng.uniform(box[:, 0], box[:, 1])
    w = np.linspace(0.0, 1.0, T)[:, None]
    jitter = _smooth_noise((T, 3), spec.motion_smoothness, rng) * 0.02 * (box[:, 1] - box[:, 0])
    root = a[None, :] * (1 - w) + b[None, :] * w + jitter
    root = np.clip(root, box[:, 0], box[:, 1])

    pos = np.zeros((T, J, 3))
    pos[:, skel.root_index] = root
    for j in _topological_order(skel):
        rest = np.asarray(spec.rest_directions[j], dtype=np.float64)
        wobble = _smooth_noise((T, 3), spec.motion_smoothness, rng) * spec.motion_amplitude
        d = rest[None, :] + wobble
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        length = spec.scale_multiplier * skel.template_bone_lengths[j]
        pos[:, j] = pos[:, skel.parent[j]] + d * length
    return pos


def generate_domain(spec: SyntheticDomainSpec, skel: SkeletonSpec,
                    num_windows: int, T: int, rng: np.random.Generator,
                    max_retries: int = 50):
    """Returns (PairedDataset with ground truth, 2D-only UnpairedDataset view)."""
    entries = []
    for _ in range(num_windows):
        for attempt in range(max_retries):
            pos = _synthesize_window(spec, skel, T, rng)
            if np.all(pos[:, :, 2] > 0):
                break
        else:
            raise GeometryError(
                f"could not place a window in front of the camera after {max_retries} tries")
        y3d = PoseSequence3D(pos)
        x2d = project(y3d, spec.camera)
        entries.append((x2d, y3d))
    paired = PairedDataset(tuple(entries))
    unpaired = UnpairedDataset(tuple(e[0] for e in entries))
    return paired, unpaired
