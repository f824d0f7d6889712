"""Command-line entry point.

Subcommands: synth, pretrain, adapt, infer, eval, ablate, report.
Exit codes: 0 success, 2 config error, 3 runtime/numerical error.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .adaptation import adapt as run_adapt
from .adaptation import infer as run_infer
from .adaptation import pretrain_source
from .config import default_config, load_config, write_config
from .diffusion import make_schedule
from .errors import ConfigError, PoseLiftError
from .experiment import (emit_plot_data, evaluate_model, generate_domains,
                         numpy_stream, run_ablation, run_experiment,
                         torch_stream)
from .skeleton import default_skeleton


def _load(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _common(sub):
    sub.add_argument("--config", help="experiment config file (key=value sections)")
    sub.add_argument("--seed", type=int, help="master seed override")
    sub.add_argument("--out", required=True, help="output directory")


def cmd_synth(args):
    cfg = _load(args)
    out = Path(args.out)
    for which in ("source", "target"):
        d = out / which
        d.mkdir(parents=True, exist_ok=True)
        paired, _ = generate_domains(cfg, which)
        cam = (cfg.source if which == "source" else cfg.target).camera()
        io.write_camera(d / "camera.cam", cam)
        for i, (x2d, y3d) in enumerate(paired.entries):
            io.write_pose2d(d / f"window_{i:04d}.p2d", x2d)
            io.write_pose3d(d / f"window_{i:04d}.p3d", y3d)
    write_config(out / "config.ini", cfg)
    print(f"wrote {cfg.source_windows} source and {cfg.target_windows} target windows to {out}")
    return 0


def cmd_pretrain(args):
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    source_pairs, _ = generate_domains(cfg, "source")
    sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    dcfg = replace(cfg.denoiser, frames=cfg.frames)
    model, losses = pretrain_source(dcfg, source_pairs, sched, cfg.pretrain,
                                    torch_stream(cfg.seed, "pretrain"))
    io.save_checkpoint(out / "pretrained.ckpt", model)
    io.write_loss_log(out / "pretrain_loss.csv", losses)
    print(f"pretrained for {cfg.pretrain.num_steps} steps, final loss {losses[-1]:.6f}")
    return 0


def cmd_adapt(args):
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    theta_s = io.load_checkpoint(args.checkpoint)
    source_pairs, _ = generate_domains(cfg, "source")
    _, target_2d = generate_domains(cfg, "target")
    sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    student, log = run_adapt(theta_s.config, source_pairs, target_2d,
                             cfg.target.camera(), theta_s, cfg.hypotheses,
                             default_skeleton(), sched, cfg.adapt,
                             torch_stream(cfg.seed, "adapt"))
    io.save_checkpoint(out / "adapted.ckpt", student)
    io.write_step_log(out / "adapt_log.csv", log)
    print(f"adapted for {cfg.adapt.num_steps} steps, final loss {log[-1]['loss']:.6f}")
    return 0


def cmd_infer(args):
    cfg = _load(args)
    model = io.load_checkpoint(args.checkpoint)
    x2d = io.read_pose2d(args.pose2d)
    cam = io.read_camera(args.camera) if args.camera else None
    sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    skel = default_skeleton() if cam else None
    pose = run_infer(model, x2d, sched, torch_stream(cfg.seed, "infer"), cam, skel)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    io.write_pose3d(args.out, pose)
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args):
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = io.load_checkpoint(args.checkpoint)
    target_pairs, _ = generate_domains(cfg, "target")
    rng = numpy_stream(cfg.seed, "eval_data")
    n_eval = min(cfg.eval_windows, target_pairs.size)
    idx = rng.choice(target_pairs.size, size=n_eval, replace=False)
    pairs = [target_pairs.entries[i] for i in idx]
    sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    report = evaluate_model(model, pairs, sched,
                            torch_stream(cfg.seed, "eval_cli"), default_skeleton())
    io.write_metric_report(out / "metrics.csv", [("target", args.label, report)])
    print(f"target mpjpe {report.mpjpe:.2f} mm, p-mpjpe {report.p_mpjpe:.2f} mm, "
          f"pck150 {report.pck:.1f}, auc {report.auc:.3f}")
    return 0


def cmd_run(args):
    cfg = _load(args)
    reports = run_experiment(cfg, args.out, progress=lambda m: print(m, flush=True))
    src, ada = reports["source_only"], reports["adapted"]
    print(f"source-only target MPJPE {src.mpjpe:.2f} mm -> adapted {ada.mpjpe:.2f} mm")
    return 0


def cmd_ablate(args):
    cfg = _load(args)
    rows = run_ablation(cfg, args.out, args.axis,
                        progress=lambda m: print(m, flush=True))
    for value, adapted, _ in rows:
        print(f"{args.axis}={value}: adapted MPJPE {adapted:.2f} mm")
    return 0


def cmd_report(args):
    written = emit_plot_data(args.run)
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poselift",
        description="2D-to-3D pose lifting with diffusion-based unsupervised "
                    "domain adaptation on synthetic two-domain data.")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("synth", help="generate both synthetic domains to disk")
    _common(s)
    s.set_defaults(func=cmd_synth)

    s = subs.add_parser("pretrain", help="train the denoiser on the source domain")
    _common(s)
    s.set_defaults(func=cmd_pretrain)

    s = subs.add_parser("adapt", help="adapt a pretrained model to the target domain")
    _common(s)
    s.add_argument("--checkpoint", required=True, help="pretrained checkpoint")
    s.set_defaults(func=cmd_adapt)

    s = subs.add_parser("infer", help="lift one 2D pose file to 3D")
    s.add_argument("--config", help="experiment config file")
    s.add_argument("--seed", type=int, help="master seed override")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--pose2d", required=True, help="P2D input file")
    s.add_argument("--camera", help="CAM file; enables camera-space placement")
    s.add_argument("--out", required=True, help="P3D output file")
    s.set_defaults(func=cmd_infer)

    s = subs.add_parser("eval", help="evaluate a checkpoint on the target domain")
    _common(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--label", default="model", help="model column in the report")
    s.set_defaults(func=cmd_eval)

    s = subs.add_parser("run", help="full pipeline: synth, pretrain, adapt, eval")
    _common(s)
    s.set_defaults(func=cmd_run)

    s = subs.add_parser("ablate", help="grid over one ablation axis")
    _common(s)
    s.add_argument("--axis", choices=("hypotheses", "rank", "timesteps"),
                   default="hypotheses")
    s.set_defaults(func=cmd_ablate)

    s = subs.add_parser("report", help="emit plot-ready tables from a run directory")
    s.add_argument("--run", required=True, help="completed run directory")
    s.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PoseLiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
