"""Toy spatio-temporal attention denoiser with LoRA-wrapped attention
projections and a cross-dataset bias head.

Per-joint tokens carry the 2D condition and the noisy 3D pose; spatial blocks
attend across joints within a frame, temporal blocks across frames per joint.
The network predicts the clean pose directly (x-prediction).
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .diffusion import cond_from_2d, diffusion_loss, pose_to_diffusion
from .errors import ShapeMismatchError, TrainingError


@dataclass(frozen=True)
class DenoiserConfig:
    embed_dim: int = 64
    num_heads: int = 4
    depth: int = 2                      # (spatial, temporal) block pairs
    num_joints: int = 17
    frames: int = 16
    timestep_embedding_dim: int = 32
    lora_rank: int = 4                  # 0 disables LoRA
    enable_bias_head: bool = True
    root_index: int = 0
    mlp_ratio: int = 2

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")
        if self.lora_rank < 0 or self.depth < 1:
            raise ValueError("lora_rank must be >= 0 and depth >= 1")


class LoraLinear(nn.Module):
    """Frozen-capable base linear plus a rank-r update B @ A (zero at init)."""

    def __init__(self, in_features, out_features, rank):
        super().__init__()
        self.rank = rank
        self.base = nn.Linear(in_features, out_features)
        if rank > 0:
            a = (torch.rand(rank, in_features) * 2 - 1) / math.sqrt(in_features)
            self.lora_A = nn.Parameter(a)
            self.lora_B = nn.Parameter(torch.zeros(out_features, rank))
        else:
            self.lora_A = None
            self.lora_B = None

    def forward(self, x):
        if x.shape[-1] != self.base.in_features:
            raise ShapeMismatchError("LoraLinear input", self.base.in_features, x.shape[-1])
        out = self.base(x)
        if self.rank > 0:
            out = out + torch.nn.functional.linear(
                torch.nn.functional.linear(x, self.lora_A), self.lora_B)
        return out


def lora_forward(layer: LoraLinear, x: torch.Tensor) -> torch.Tensor:
    """W0 x + bias0 + B(Ax)."""
    return layer(x)


class Attention(nn.Module):
    """Multi-head self-attention with LoRA on q/k/v/output projections."""

    def __init__(self, dim, num_heads, rank):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q = LoraLinear(dim, dim, rank)
        self.k = LoraLinear(dim, dim, rank)
        self.v = LoraLinear(dim, dim, rank)
        self.proj = LoraLinear(dim, dim, rank)

    def forward(self, x):
        # x: (B, N, dim) where N is the attended axis
        B, N, dim = x.shape
        def split(t):
            return t.view(B, N, self.num_heads, self.head_dim).transpose(1, 2)
        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        attn = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, N, dim)
        return self.proj(out)


class Block(nn.Module):
    def __init__(self, dim, num_heads, rank, mlp_ratio):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads, rank)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, mlp_ratio * dim), nn.GELU(),
                                 nn.Linear(mlp_ratio * dim, dim))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


def sinusoidal_embedding(e: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sinusoidal timestep embedding, e: (B,)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = e.double()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class DenoiserModel(nn.Module):
    def __init__(self, config: DenoiserConfig, dtype=torch.float32):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.input_proj = nn.Linear(5, d)  # (u, v, x, y, z) per joint token
        self.joint_embed = nn.Parameter(torch.zeros(config.num_joints, d))
        self.time_embed = nn.Parameter(torch.zeros(config.frames, d))
        nn.init.normal_(self.joint_embed, std=0.02)
        nn.init.normal_(self.time_embed, std=0.02)
        self.step_mlp = nn.Sequential(
            nn.Linear(config.timestep_embedding_dim, d), nn.GELU(), nn.Linear(d, d))
        self.spatial_blocks = nn.ModuleList(
            Block(d, config.num_heads, config.lora_rank, config.mlp_ratio)
            for _ in range(config.depth))
        self.temporal_blocks = nn.ModuleList(
            Block(d, config.num_heads, config.lora_rank, config.mlp_ratio)
            for _ in range(config.depth))
        self.head_norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, 3)
        if config.enable_bias_head:
            self.output_bias = nn.Parameter(torch.zeros(3, config.num_joints))
        else:
            self.output_bias = None
        self.to(dtype)

    def forward(self, cond: torch.Tensor, y_e: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        """cond: (B, T, J, 2) normalized 2D; y_e: (B, T, J, 3); e: (B,) timesteps."""
        cfg = self.config
        B, T, J = cond.shape[:3]
        if (T, J) != (cfg.frames, cfg.num_joints):
            raise ShapeMismatchError("denoiser condition", (cfg.frames, cfg.num_joints), (T, J))
        if y_e.shape != (B, T, J, 3):
            raise ShapeMismatchError("denoiser y_e", (B, T, J, 3), tuple(y_e.shape))
        dtype = self.input_proj.weight.dtype
        x = self.input_proj(torch.cat([cond, y_e], dim=-1).to(dtype))
        x = x + self.joint_embed[None, None] + self.time_embed[None, :, None]
        step = self.step_mlp(sinusoidal_embedding(e, cfg.timestep_embedding_dim).to(dtype))
        x = x + step[:, None, None, :]
        d = cfg.embed_dim
        for sb, tb in zip(self.spatial_blocks, self.temporal_blocks):
            x = sb(x.reshape(B * T, J, d)).reshape(B, T, J, d)
            x = x.permute(0, 2, 1, 3).reshape(B * J, T, d)
            x = tb(x).reshape(B, J, T, d).permute(0, 2, 1, 3)
        out = self.head(self.head_norm(x))
        if self.output_bias is not None:
            out = out + self.output_bias.t()[None, None]
        return out

    def set_pretraining_mode(self):
        """Everything trainable except the LoRA adapters."""
        for name, p in self.named_parameters():
            p.requires_grad_("lora_A" not in name and "lora_B" not in name)

    def set_adaptation_mode(self):
        """Trainable set: LoRA A/B, the bias head, and the output head."""
        for name, p in self.named_parameters():
            keep = ("lora_A" in name or "lora_B" in name
                    or name == "output_bias" or name.startswith("head."))
            p.requires_grad_(keep)


def wrapped_matrix_count(config: DenoiserConfig) -> int:
    # q, k, v, out per attention block; spatial + temporal per depth level
    return 4 * 2 * config.depth


def count_parameters(model: DenoiserModel):
    """Returns (total, trainable, lora_only, bias_head) parameter counts."""
    total = sum(p.numel() for p in model.parameters())
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    lora = sum(p.numel() for n, p in model.named_parameters()
               if "lora_A" in n or "lora_B" in n)
    bias = model.output_bias.numel() if model.output_bias is not None else 0
    return total, trainable, lora, bias


def estimate_flops(model: DenoiserModel, H: int = 1) -> int:
    """Multiply-accumulate count for H forward passes over one sequence.

    Counts every linear map plus attention score/value products; exactly
    linear in H by construction.
    """
    cfg = model.config
    d, T, J, r = cfg.embed_dim, cfg.frames, cfg.num_joints, cfg.lora_rank
    N = T * J
    macs = N * 5 * d                                   # input projection
    macs += cfg.timestep_embedding_dim * d + d * d     # timestep MLP, once per sequence
    per_block_linear = 4 * N * d * d                   # q, k, v, out
    per_block_lora = 4 * N * r * (d + d)
    per_block_mlp = 2 * N * d * (cfg.mlp_ratio * d)
    spatial_attn = T * (2 * J * J * d)                 # scores + weighted values
    temporal_attn = J * (2 * T * T * d)
    for _ in range(cfg.depth):
        macs += 2 * (per_block_linear + per_block_lora + per_block_mlp)
        macs += spatial_attn + temporal_attn
    macs += N * d * 3                                  # output head
    return int(macs) * H


def draw_batch_noise(batch, sched, rng: torch.Generator, root_index: int,
                     dtype=torch.float32):
    """Per-entry (y0, timestep, epsilon) draws for one training batch."""
    out = []
    for x2d, y3d in batch:
        y0 = pose_to_diffusion(y3d, root_index, dtype=dtype)
        e = int(torch.randint(1, sched.num_steps + 1, (1,), generator=rng))
        eps = torch.randn(y0.shape, generator=rng, dtype=dtype)
        out.append((y0, e, eps))
    return out


def training_loss(model: DenoiserModel, batch, sched, noise) -> torch.Tensor:
    """Corrupt each y0 with its drawn (e, eps), denoise, and average the
    clean-pose MSE over the batch."""
    cfg = model.config
    dtype = model.input_proj.weight.dtype
    cond = torch.stack([cond_from_2d(x2d, cfg.root_index, dtype=dtype)
                        for x2d, _ in batch])
    y0 = torch.stack([n[0] for n in noise])
    e = torch.tensor([n[1] for n in noise])
    ab = torch.tensor([sched.alpha_bar[n[1] - 1] for n in noise], dtype=dtype)
    eps = torch.stack([n[2] for n in noise])
    y_e = ab.sqrt()[:, None, None, None] * y0 + (1 - ab).sqrt()[:, None, None, None] * eps
    pred = model(cond, y_e, e)
    return diffusion_loss(y0, pred)


def gradients(model: DenoiserModel, batch, sched, rng: torch.Generator):
    """Exact gradients of the mean batch loss w.r.t. every trainable parameter.

    Returns (loss value, {name: grad tensor}); frozen parameters are absent.
    """
    if not batch:
        raise ValueError("gradients needs a nonempty batch")
    dtype = model.input_proj.weight.dtype
    noise = draw_batch_noise(batch, sched, rng, model.config.root_index, dtype=dtype)
    loss = training_loss(model, batch, sched, noise)
    if not torch.isfinite(loss):
        # attribute the failure to the first entry with a nonfinite per-entry loss
        idx = 0
        for i in range(len(batch)):
            li = training_loss(model, batch[i:i + 1], sched, noise[i:i + 1])
            if not torch.isfinite(li):
                idx = i
                break
        raise TrainingError("nonfinite training loss", batch_index=idx)
    model.zero_grad(set_to_none=True)
    loss.backward()
    grads = {n: p.grad.detach().clone() for n, p in model.named_parameters()
             if p.requires_grad and p.grad is not None}
    return float(loss.detach()), grads
