"""DDPM noise schedule, forward corruption, denoiser invocation and loss.

The diffusion space is root-relative millimeters divided by 1000 (meters), so
coordinate magnitudes are O(1) and unit-variance noise is meaningful. The 2D
condition is root-centered pixels divided by 1000.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ShapeMismatchError
from .skeleton import PoseSequence2D, PoseSequence3D

POSE_SCALE_MM = 1000.0   # mm per normalized unit
COND_SCALE_PX = 1000.0   # px per normalized unit


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray       # (E,) in (0,1)
    alpha: np.ndarray      # 1 - beta
    alpha_bar: np.ndarray  # cumulative product of alpha

    @property
    def num_steps(self):
        return len(self.beta)


def make_schedule(E: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    """Linear beta schedule over E steps."""
    if E < 1:
        raise ValueError("schedule needs at least one timestep")
    if not (0 < beta_start <= beta_end < 1):
        raise ValueError("betas must satisfy 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, E)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


@dataclass(frozen=True)
class DiffusionState:
    y_e: torch.Tensor      # noisy pose, normalized units, (T, J, 3)
    e: int                 # timestep, 1-based
    epsilon: torch.Tensor  # the Gaussian draw that produced y_e


def forward_sample(y0: torch.Tensor, e: int, sched: NoiseSchedule,
                   rng: torch.Generator) -> DiffusionState:
    """Direct sample of the e-step marginal: sqrt(ab)*y0 + sqrt(1-ab)*eps."""
    if not 1 <= e <= sched.num_steps:
        raise ValueError(f"timestep {e} outside [1, {sched.num_steps}]")
    ab = sched.alpha_bar[e - 1]
    eps = torch.randn(y0.shape, generator=rng, dtype=y0.dtype)
    y_e = np.sqrt(ab) * y0 + np.sqrt(1.0 - ab) * eps
    return DiffusionState(y_e=y_e, e=e, epsilon=eps)


def forward_sample_stepwise(y0: torch.Tensor, e: int, sched: NoiseSchedule,
                            rng: torch.Generator) -> torch.Tensor:
    """Compose the single-step transitions from y0 to y_e (test oracle for the
    direct marginal)."""
    if not 1 <= e <= sched.num_steps:
        raise ValueError(f"timestep {e} outside [1, {sched.num_steps}]")
    y = y0
    for s in range(e):
        b = sched.beta[s]
        eps = torch.randn(y0.shape, generator=rng, dtype=y0.dtype)
        y = np.sqrt(1.0 - b) * y + np.sqrt(b) * eps
    return y


def diffusion_loss(y0: torch.Tensor, y0_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all frames, joints and coordinates."""
    if y0.shape != y0_hat.shape:
        raise ShapeMismatchError("diffusion_loss", tuple(y0.shape), tuple(y0_hat.shape))
    return torch.mean((y0 - y0_hat) ** 2)


def denoise(model, x2d: PoseSequence2D, state: DiffusionState) -> torch.Tensor:
    """One x-prediction forward pass of the denoiser. Deterministic."""
    cond = cond_from_2d(x2d, model.config.root_index, dtype=state.y_e.dtype)
    with torch.no_grad():
        return model(cond.unsqueeze(0), state.y_e.unsqueeze(0),
                     torch.tensor([state.e])).squeeze(0)


def sample_hypotheses(model, x2d: PoseSequence2D, H: int, sched: NoiseSchedule,
                      rng: torch.Generator):
    """H single-shot denoised hypotheses from independent pure-noise draws."""
    if H < 1:
        raise ValueError("need at least one hypothesis")
    dtype = next(model.parameters()).dtype
    eps = torch.randn((H, x2d.frames, x2d.num_joints, 3), generator=rng, dtype=dtype)
    cond = cond_from_2d(x2d, model.config.root_index, dtype=dtype)
    e = torch.full((H,), sched.num_steps)
    with torch.no_grad():
        out = model(cond.expand(H, -1, -1, -1), eps, e)
    return [out[h] for h in range(H)]


def pose_to_diffusion(pose3d: PoseSequence3D, root_index: int,
                      dtype=torch.float32) -> torch.Tensor:
    """Root-relative mm -> normalized diffusion-space tensor."""
    rel = pose3d.coords - pose3d.coords[:, root_index:root_index + 1, :]
    return torch.as_tensor(rel / POSE_SCALE_MM, dtype=dtype)


def diffusion_to_pose(y: torch.Tensor) -> PoseSequence3D:
    """Normalized tensor -> root-relative millimeter pose."""
    return PoseSequence3D(y.detach().cpu().numpy().astype(np.float64) * POSE_SCALE_MM)


def cond_from_2d(pose2d: PoseSequence2D, root_index: int,
                 dtype=torch.float32) -> torch.Tensor:
    """Root-centered, scaled 2D condition tensor (T, J, 2)."""
    c = pose2d.coords - pose2d.coords[:, root_index:root_index + 1, :]
    return torch.as_tensor(c / COND_SCALE_PX, dtype=dtype)
