"""End-to-end training: source pretraining, teacher multi-hypothesis
pseudo-labeling, augmented-batch student updates, and inference."""

import copy
import hashlib
from dataclasses import dataclass

import numpy as np
import torch

from .camera import CameraIntrinsics, augment_source, place_root_relative, project
from .denoiser import DenoiserConfig, DenoiserModel, draw_batch_noise, training_loss
from .diffusion import NoiseSchedule, diffusion_to_pose, sample_hypotheses
from .errors import GeometryError, TrainingError
from .skeleton import (PairedDataset, PoseSequence2D, PoseSequence3D,
                       SkeletonSpec, UnpairedDataset, root_relative)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 6e-5
    batch_size: int = 4
    num_steps: int = 1000
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.num_steps < 1:
            raise ValueError("invalid optimizer configuration")


@dataclass
class HypothesisSet:
    hypotheses: list            # H pose tensors, normalized root-relative units
    reproj_errors: np.ndarray   # (H,) mean pixel error, inf for invalid depth
    selected_index: int
    pseudo_label: torch.Tensor

    def __post_init__(self):
        assert self.selected_index == int(np.argmin(self.reproj_errors))


@dataclass
class AdaptationState:
    student: DenoiserModel
    teacher_snapshot: DenoiserModel
    step: int
    rng_seed: int = None


def parameter_hash(model: DenoiserModel) -> str:
    h = hashlib.sha256()
    for name, p in sorted(model.named_parameters()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def _make_optimizer(model, opt: OptimizerConfig):
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(params, lr=opt.learning_rate,
                            betas=opt.adam_betas, eps=opt.adam_eps)


def _sample_indices(n, count, rng: torch.Generator):
    return [int(i) for i in torch.randint(0, n, (count,), generator=rng)]


def pretrain_source(config: DenoiserConfig, source: PairedDataset,
                    sched: NoiseSchedule, opt: OptimizerConfig,
                    rng: torch.Generator, model: DenoiserModel = None):
    """Supervised diffusion training on the source domain.

    Returns (model, per-step loss list).
    """
    if source.size < 1:
        raise ValueError("pretrain_source needs a nonempty source dataset")
    if model is None:
        torch.manual_seed(int(torch.randint(0, 2**31 - 1, (1,), generator=rng)))
        model = DenoiserModel(config)
    model.set_pretraining_mode()
    optimizer = _make_optimizer(model, opt)
    losses = []
    for step in range(opt.num_steps):
        idx = _sample_indices(source.size, opt.batch_size, rng)
        batch = [source.entries[i] for i in idx]
        noise = draw_batch_noise(batch, sched, rng, config.root_index,
                                 dtype=model.input_proj.weight.dtype)
        loss = training_loss(model, batch, sched, noise)
        if not torch.isfinite(loss):
            raise TrainingError("nonfinite pretraining loss", step=step)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))
    return model, losses


def pseudo_label(teacher: DenoiserModel, x2d_t: PoseSequence2D, H: int,
                 cam_t: CameraIntrinsics, skel: SkeletonSpec,
                 sched: NoiseSchedule, rng: torch.Generator) -> HypothesisSet:
    """Generate H hypotheses, project each with the scale-matched placement,
    and select the one with minimum mean 2D reprojection error."""
    hyps = sample_hypotheses(teacher, x2d_t, H, sched, rng)
    errors = np.full(H, np.inf)
    for h, y in enumerate(hyps):
        pose_mm = diffusion_to_pose(y)  # root-relative millimeters
        try:
            placed = place_root_relative(pose_mm, x2d_t, skel, cam_t)
            proj = project(placed, cam_t)
        except GeometryError:
            continue
        errors[h] = float(np.linalg.norm(proj.coords - x2d_t.coords, axis=-1).mean())
    if not np.any(np.isfinite(errors)):
        raise GeometryError("every hypothesis had nonpositive depth after placement")
    selected = int(np.argmin(errors))
    return HypothesisSet(hypotheses=hyps, reproj_errors=errors,
                         selected_index=selected, pseudo_label=hyps[selected])


def select_by_reprojection(errors) -> int:
    """Brute-force argmin with lowest-index tie-breaking (oracle helper)."""
    errors = np.asarray(errors, dtype=np.float64)
    best = 0
    for i in range(1, len(errors)):
        if errors[i] < errors[best]:
            best = i
    return best


def adapt(config: DenoiserConfig, source: PairedDataset, target: UnpairedDataset,
          cam_t: CameraIntrinsics, theta_s: DenoiserModel, H: int,
          skel: SkeletonSpec, sched: NoiseSchedule, opt: OptimizerConfig,
          rng: torch.Generator):
    """Teacher-student adaptation on augmented source + pseudo-labeled target.

    Returns (adapted student, step log). Each log record carries the step
    index, loss, mean reprojection error of the selected pseudo-labels, and H.
    """
    if target.size < 1:
        raise ValueError("adapt needs a nonempty target dataset")
    student = copy.deepcopy(theta_s)
    student.set_adaptation_mode()
    optimizer = _make_optimizer(student, opt)
    log = []
    for step in range(opt.num_steps):
        # teacher snapshot: equal to the student at the top of the step
        teacher = copy.deepcopy(student)
        teacher.eval()
        for p in teacher.parameters():
            p.requires_grad_(False)

        t_idx = _sample_indices(target.size, opt.batch_size, rng)
        s_idx = _sample_indices(source.size, opt.batch_size, rng)
        target_batch = [target.entries[i] for i in t_idx]
        source_batch = [source.entries[i] for i in s_idx]

        try:
            aug_entries = []
            for x2d_t, (_, y3d_s) in zip(target_batch, source_batch):
                centered = root_relative(y3d_s, skel)
                aug_entries.append(augment_source(x2d_t, centered, skel, cam_t))
            pseudo_entries = []
            reproj = []
            for x2d_t in target_batch:
                hs = pseudo_label(teacher, x2d_t, H, cam_t, skel, sched, rng)
                pseudo_entries.append((x2d_t, diffusion_to_pose(hs.pseudo_label)))
                reproj.append(hs.reproj_errors[hs.selected_index])
        except (GeometryError, ValueError) as exc:
            raise TrainingError(f"adaptation step failed: {exc}", step=step) from exc

        batch = aug_entries + pseudo_entries
        noise = draw_batch_noise(batch, sched, rng, config.root_index,
                                 dtype=student.input_proj.weight.dtype)
        loss = training_loss(student, batch, sched, noise)
        if not torch.isfinite(loss):
            raise TrainingError("nonfinite adaptation loss", step=step)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        log.append({"step": step, "loss": float(loss.detach()),
                    "pseudo_reproj_px": float(np.mean(reproj)), "H": H})
    return student, log


def infer(model: DenoiserModel, x2d: PoseSequence2D, sched: NoiseSchedule,
          rng: torch.Generator, cam: CameraIntrinsics = None,
          skel: SkeletonSpec = None) -> PoseSequence3D:
    """Single-shot inference. With a camera and skeleton the output is placed
    in camera-space millimeters; otherwise it stays root-relative."""
    hyp = sample_hypotheses(model, x2d, 1, sched, rng)[0]
    pose = diffusion_to_pose(hyp)
    ri = model.config.root_index
    pose = PoseSequence3D(pose.coords - pose.coords[:, ri:ri + 1, :])
    if cam is not None and skel is not None:
        pose = place_root_relative(pose, x2d, skel, cam)
    return pose
