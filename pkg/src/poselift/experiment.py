"""Experiment orchestration: seeded data generation, pretraining, adaptation,
evaluation, ablation grids, and plot-data emission."""

import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import io
from .adaptation import adapt, infer, pretrain_source
from .config import ExperimentConfig
from .diffusion import make_schedule
from .errors import ConfigError
from .metrics import evaluate_many
from .skeleton import default_skeleton


def stream_seed(master_seed: int, name: str) -> int:
    """Stable per-purpose sub-seed derived from the master seed."""
    return int(np.random.SeedSequence([master_seed, zlib.crc32(name.encode())])
               .generate_state(1)[0])


def numpy_stream(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(master_seed, name))


def torch_stream(master_seed: int, name: str) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(stream_seed(master_seed, name) & 0x7FFFFFFFFFFF)
    return g


def _denoiser_config(cfg: ExperimentConfig):
    return replace(cfg.denoiser, frames=cfg.frames)


def evaluate_model(model, eval_pairs, sched, rng, skel):
    """Run single-shot inference per window and aggregate the metrics."""
    preds, gts = [], []
    for x2d, y3d in eval_pairs:
        preds.append(infer(model, x2d, sched, rng))
        gts.append(y3d)
    return evaluate_many(preds, gts, skel)


def run_experiment(cfg: ExperimentConfig, out_dir, progress=None):
    """Full pipeline: synth both domains, pretrain, baseline eval, adapt,
    re-eval. Writes reports, logs, and checkpoints under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    skel = default_skeleton()
    seed = cfg.seed

    def note(msg):
        if progress:
            progress(msg)

    note("generating domains")
    source_pairs, _ = generate_domains(cfg, "source")
    target_pairs, target_2d = generate_domains(cfg, "target")
    eval_rng = numpy_stream(seed, "eval_data")
    n_eval = min(cfg.eval_windows, target_pairs.size)
    eval_idx = eval_rng.choice(target_pairs.size, size=n_eval, replace=False)
    eval_pairs = [target_pairs.entries[i] for i in eval_idx]

    sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    dcfg = _denoiser_config(cfg)
    cam_t = cfg.target.camera()

    note("pretraining on source")
    theta_s, pretrain_losses = pretrain_source(
        dcfg, source_pairs, sched, cfg.pretrain, torch_stream(seed, "pretrain"))
    io.save_checkpoint(out / "pretrained.ckpt", theta_s)
    io.write_loss_log(out / "pretrain_loss.csv", pretrain_losses)

    note("evaluating source-only model on target")
    report_src = evaluate_model(theta_s, eval_pairs, sched,
                                torch_stream(seed, "eval_source_only"), skel)

    note("adapting to target")
    student, log = adapt(dcfg, source_pairs, target_2d, cam_t, theta_s,
                         cfg.hypotheses, skel, sched, cfg.adapt,
                         torch_stream(seed, "adapt"))
    io.save_checkpoint(out / "adapted.ckpt", student)
    io.write_step_log(out / "adapt_log.csv", log)

    note("evaluating adapted model on target")
    report_adapted = evaluate_model(student, eval_pairs, sched,
                                    torch_stream(seed, "eval_adapted"), skel)

    rows = [("target", "source_only", report_src),
            ("target", "adapted", report_adapted)]
    io.write_metric_report(out / "metrics.csv", rows)
    return {"source_only": report_src, "adapted": report_adapted}


def generate_domains(cfg: ExperimentConfig, which: str):
    """Deterministic synthetic data for one domain of the experiment."""
    from .synth import generate_domain
    skel = default_skeleton()
    if which == "source":
        spec, n = cfg.source.domain_spec(), cfg.source_windows
    elif which == "target":
        spec, n = cfg.target.domain_spec(), cfg.target_windows
    else:
        raise ValueError(f"unknown domain {which!r}")
    rng = numpy_stream(cfg.seed, f"data_{which}")
    return generate_domain(spec, skel, n, cfg.frames, rng)


def run_ablation(cfg: ExperimentConfig, out_dir, axis: str, progress=None):
    """Grid runs over one ablation axis; writes a per-cell run directory and a
    summary table. Axes: hypotheses, rank, timesteps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if axis == "hypotheses":
        grid = cfg.hypothesis_grid
        variants = [replace(cfg, hypotheses=h) for h in grid]
        summary_name = "ablation_hypotheses.csv"
    elif axis == "rank":
        grid = cfg.rank_grid
        variants = [replace(cfg, denoiser=replace(cfg.denoiser, lora_rank=r))
                    for r in grid]
        summary_name = "ablation_rank.csv"
    elif axis == "timesteps":
        grid = cfg.timestep_grid
        variants = [replace(cfg, timesteps=e) for e in grid]
        summary_name = "ablation_timesteps.csv"
    else:
        raise ConfigError(f"unknown ablation axis {axis!r}")
    rows = []
    for value, variant in zip(grid, variants):
        sub = out / f"{axis}_{value}"
        reports = run_experiment(variant, sub, progress=progress)
        rows.append((value, reports["adapted"].mpjpe, reports["source_only"].mpjpe))
    lines = [f"{axis},adapted_mpjpe_mm,source_only_mpjpe_mm"]
    for value, adapted, src in rows:
        lines.append("%s,%.6f,%.6f" % (value, adapted, src))
    (out / summary_name).write_text("\n".join(lines) + "\n")
    return rows


def emit_plot_data(run_dir):
    """Convert run logs into plot-ready (x, y) tables under run_dir/plots."""
    run = Path(run_dir)
    plots = run / "plots"
    written = []

    adapt_logs = sorted(run.rglob("adapt_log.csv"))
    pretrain_logs = sorted(run.rglob("pretrain_loss.csv"))
    if not adapt_logs and not pretrain_logs:
        raise ConfigError(f"{run}: no step logs found; run an experiment first")
    plots.mkdir(parents=True, exist_ok=True)

    if pretrain_logs:
        losses = io.read_loss_log(pretrain_logs[0])
        lines = ["step,value"] + ["%d,%.9g" % (i, v) for i, v in enumerate(losses)]
        (plots / "pretrain_loss_curve.csv").write_text("\n".join(lines) + "\n")
        written.append(plots / "pretrain_loss_curve.csv")
    if adapt_logs:
        log = io.read_step_log(adapt_logs[0])
        loss_lines = ["step,value"] + ["%d,%.9g" % (r["step"], r["loss"]) for r in log]
        (plots / "loss_curve.csv").write_text("\n".join(loss_lines) + "\n")
        rp_lines = ["step,value"] + ["%d,%.9g" % (r["step"], r["pseudo_reproj_px"])
                                     for r in log]
        (plots / "reproj_curve.csv").write_text("\n".join(rp_lines) + "\n")
        written += [plots / "loss_curve.csv", plots / "reproj_curve.csv"]

    for summary, name, col in (("ablation_hypotheses.csv", "mpjpe_vs_h.csv", "H"),
                               ("ablation_rank.csv", "mpjpe_vs_rank.csv", "rank"),
                               ("ablation_timesteps.csv", "mpjpe_vs_timesteps.csv",
                                "timesteps")):
        path = run / summary
        if path.exists():
            lines = path.read_text().strip().split("\n")
            out_lines = [f"{col},mpjpe_mm"]
            for ln in lines[1:]:
                parts = ln.split(",")
                out_lines.append(f"{parts[0]},{parts[1]}")
            (plots / name).write_text("\n".join(out_lines) + "\n")
            written.append(plots / name)
    return written
