import numpy as np
import pytest
import torch

from poselift import io
from poselift.adaptation import parameter_hash
from poselift.camera import CameraIntrinsics, project
from poselift.cli import main
from poselift.config import default_config, load_config, write_config
from poselift.denoiser import DenoiserConfig, DenoiserModel
from poselift.errors import ConfigError
from poselift.experiment import generate_domains, stream_seed
from poselift.skeleton import (PoseSequence2D, PoseSequence3D, bone_lengths_2d,
                               bone_lengths_3d)
from poselift.synth import SyntheticDomainSpec, generate_domain

from conftest import random_pose3d_coords


class TestPoseFiles:
    def test_pose3d_round_trip(self, tmp_path, np_rng):
        pose = PoseSequence3D(random_pose3d_coords(np_rng, 3, 17))
        p = tmp_path / "a.p3d"
        io.write_pose3d(p, pose)
        back = io.read_pose3d(p)
        np.testing.assert_allclose(back.coords, pose.coords, rtol=1e-8)
        assert p.read_text().startswith("P3D v1 frames=3 joints=17\n")

    def test_pose2d_round_trip(self, tmp_path, np_rng):
        pose = PoseSequence2D(np_rng.uniform(0, 1000, (2, 17, 2)))
        p = tmp_path / "a.p2d"
        io.write_pose2d(p, pose)
        np.testing.assert_allclose(io.read_pose2d(p).coords, pose.coords, rtol=1e-8)
        assert p.read_text().startswith("P2D v1 frames=2 joints=17\n")

    def test_malformed_header_rejected(self, tmp_path):
        p = tmp_path / "bad.p3d"
        p.write_text("P3D v2 frames=1 joints=2\n0 0 0 1 1 1\n")
        with pytest.raises(ConfigError):
            io.read_pose3d(p)

    def test_wrong_line_count_rejected(self, tmp_path):
        p = tmp_path / "bad.p3d"
        p.write_text("P3D v1 frames=2 joints=1\n0 0 0\n")
        with pytest.raises(ConfigError):
            io.read_pose3d(p)


class TestCameraFile:
    def test_round_trip(self, tmp_path):
        cam = CameraIntrinsics(1100.5, 1099.25, 512.0, 384.0, 1024, 768)
        p = tmp_path / "c.cam"
        io.write_camera(p, cam)
        back = io.read_camera(p)
        assert back == cam
        assert p.read_text().startswith("CAM v1 ")

    def test_malformed_rejected(self, tmp_path):
        p = tmp_path / "c.cam"
        p.write_text("CAM v2 1 1 0 0 10 10\n")
        with pytest.raises(ConfigError):
            io.read_camera(p)


class TestReportsAndLogs:
    def test_metric_report_round_trip(self, tmp_path):
        from poselift.metrics import MetricReport
        rows = [("target", "source_only", MetricReport(100.0, 80.0, 55.5, 0.31)),
                ("target", "adapted", MetricReport(60.0, 45.0, 88.25, 0.62))]
        p = tmp_path / "metrics.csv"
        io.write_metric_report(p, rows)
        assert p.read_text().splitlines()[0] == "split,model,mpjpe_mm,p_mpjpe_mm,pck150,auc"
        back = io.read_metric_report(p)
        assert back[1]["model"] == "adapted"
        assert back[0]["mpjpe_mm"] == pytest.approx(100.0)
        assert back[1]["auc"] == pytest.approx(0.62)

    def test_metric_report_byte_stable(self, tmp_path):
        from poselift.metrics import MetricReport
        rows = [("target", "m", MetricReport(123.456789, 99.87654321, 42.0, 0.333333333))]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        io.write_metric_report(a, rows)
        io.write_metric_report(b, rows)
        assert a.read_bytes() == b.read_bytes()

    def test_step_log_round_trip(self, tmp_path):
        log = [{"step": 0, "loss": 0.51234567, "pseudo_reproj_px": 12.25, "H": 3},
               {"step": 1, "loss": 0.43, "pseudo_reproj_px": 11.0, "H": 3}]
        p = tmp_path / "log.csv"
        io.write_step_log(p, log)
        back = io.read_step_log(p)
        assert back[0]["loss"] == pytest.approx(0.51234567)
        assert back[1]["H"] == 3

    def test_loss_log_round_trip(self, tmp_path):
        losses = [0.9, 0.5, 0.25, 0.125]
        p = tmp_path / "loss.csv"
        io.write_loss_log(p, losses)
        assert io.read_loss_log(p) == pytest.approx(losses)


def tiny_model(seed=0):
    torch.manual_seed(seed)
    cfg = DenoiserConfig(embed_dim=8, num_heads=2, depth=1, num_joints=3,
                         frames=2, timestep_embedding_dim=8, lora_rank=2)
    return DenoiserModel(cfg)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        model = tiny_model()
        p = tmp_path / "m.ckpt"
        io.save_checkpoint(p, model)
        back = io.load_checkpoint(p)
        assert back.config == model.config
        assert parameter_hash(back) == parameter_hash(model)

    def test_byte_stable(self, tmp_path):
        model = tiny_model()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        io.save_checkpoint(a, model)
        io.save_checkpoint(b, model)
        assert a.read_bytes() == b.read_bytes()

    def test_load_save_load_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        io.save_checkpoint(a, tiny_model())
        io.save_checkpoint(b, io.load_checkpoint(a))
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.ckpt"
        p.write_bytes(b"not a checkpoint")
        with pytest.raises(ConfigError):
            io.load_checkpoint(p)

    def test_unknown_parameter_rejected(self, tmp_path):
        p = tmp_path / "m.ckpt"
        io.save_checkpoint(p, tiny_model())
        extra = np.zeros(2, dtype="<f4")
        with open(p, "ab") as f:
            f.write(b"bogus.weight 2 <f4 8\n")
            f.write(extra.tobytes())
        with pytest.raises(ConfigError):
            io.load_checkpoint(p)

    def test_inference_preserved(self, tmp_path, torch_rng):
        model = tiny_model()
        p = tmp_path / "m.ckpt"
        io.save_checkpoint(p, model)
        back = io.load_checkpoint(p)
        cond = torch.randn(1, 2, 3, 2, generator=torch_rng)
        y_e = torch.randn(1, 2, 3, 3, generator=torch_rng)
        e = torch.tensor([4])
        torch.testing.assert_close(back(cond, y_e, e), model(cond, y_e, e))


class TestConfig:
    def test_default_round_trips(self, tmp_path):
        cfg = default_config(seed=7)
        p = tmp_path / "c.ini"
        write_config(p, cfg)
        back = load_config(p)
        assert back.seed == 7
        assert back.source == cfg.source and back.target == cfg.target
        assert back.pretrain == cfg.pretrain and back.adapt == cfg.adapt
        assert back.timesteps == cfg.timesteps
        assert back.beta_end == pytest.approx(cfg.beta_end)
        assert back.hypothesis_grid == cfg.hypothesis_grid

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[mystery]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[experiment]\nseeed = 1\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_bad_value_rejected(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[experiment]\nseed = banana\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_partial_override(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[target_domain]\nfx = 2000\n[adapt]\nnum_steps = 7\n")
        cfg = load_config(p)
        assert cfg.target.fx == 2000.0
        assert cfg.adapt.num_steps == 7
        # untouched values keep defaults
        assert cfg.target.fy == default_config().target.fy
        assert cfg.adapt.learning_rate == default_config().adapt.learning_rate


class TestSynth:
    def _spec(self, scale=1.0):
        cam = CameraIntrinsics(1000.0, 1000.0, 500.0, 500.0, 1000, 1000)
        return SyntheticDomainSpec(camera=cam, scale_multiplier=scale)

    def test_pairs_projection_consistent(self, skel):
        (paired, _) = generate_domain(self._spec(), skel, 3, 5, np.random.default_rng(0))
        cam = self._spec().camera
        for x2d, y3d in paired.entries:
            np.testing.assert_allclose(project(y3d, cam).coords, x2d.coords, atol=1e-9)

    def test_bone_lengths_exact(self, skel):
        (paired, _) = generate_domain(self._spec(1.3), skel, 2, 4, np.random.default_rng(1))
        _, y3d = paired.entries[0]
        lengths = bone_lengths_3d(y3d, skel)
        expected = np.array([skel.template_bone_lengths[j] * 1.3
                             for j in skel.non_root_joints])
        np.testing.assert_allclose(lengths, np.broadcast_to(expected, lengths.shape),
                                   rtol=1e-9)

    def test_deterministic_by_seed(self, skel):
        a, _ = generate_domain(self._spec(), skel, 2, 4, np.random.default_rng(5))
        b, _ = generate_domain(self._spec(), skel, 2, 4, np.random.default_rng(5))
        np.testing.assert_array_equal(a.entries[0][1].coords, b.entries[0][1].coords)

    def test_unpaired_is_2d_only(self, skel):
        _, unpaired = generate_domain(self._spec(), skel, 2, 4, np.random.default_rng(2))
        for entry in unpaired.entries:
            assert isinstance(entry, PoseSequence2D)

    def test_domains_have_distinct_2d_scale(self, skel):
        cfg = default_config(seed=0)
        src, _ = generate_domains(cfg, "source")
        tgt, _ = generate_domains(cfg, "target")
        s_src = np.array([bone_lengths_2d(p[0], skel).mean() for p in src.entries[:64]])
        s_tgt = np.array([bone_lengths_2d(p[0], skel).mean() for p in tgt.entries[:64]])
        # domain means separated by well over 5 standard errors
        se = np.sqrt(s_src.var() / len(s_src) + s_tgt.var() / len(s_tgt))
        assert abs(s_tgt.mean() - s_src.mean()) > 5 * se


def _tiny_experiment(seed=0):
    from dataclasses import replace
    from poselift.adaptation import OptimizerConfig
    cfg = default_config(seed=seed)
    return replace(
        cfg, frames=4, source_windows=8, target_windows=6, eval_windows=4,
        hypotheses=2, hypothesis_grid=(1, 2), rank_grid=(1, 2), timestep_grid=(5, 10),
        timesteps=10,
        denoiser=replace(cfg.denoiser, embed_dim=16, num_heads=2, depth=1),
        pretrain=OptimizerConfig(learning_rate=1e-3, batch_size=2, num_steps=3),
        adapt=OptimizerConfig(learning_rate=6e-5, batch_size=2, num_steps=3))


class TestRunExperiment:
    def test_artifacts_and_schema(self, tmp_path):
        from poselift.experiment import run_experiment, run_ablation
        cfg = _tiny_experiment()
        run_experiment(cfg, tmp_path / "run")
        rows = io.read_metric_report(tmp_path / "run" / "metrics.csv")
        assert {r["model"] for r in rows} == {"source_only", "adapted"}
        assert all(r["split"] == "target" for r in rows)
        # loss log has exactly num_steps rows
        losses = io.read_loss_log(tmp_path / "run" / "pretrain_loss.csv")
        assert len(losses) == cfg.pretrain.num_steps
        log = io.read_step_log(tmp_path / "run" / "adapt_log.csv")
        assert [r["step"] for r in log] == list(range(cfg.adapt.num_steps))

    def test_ablation_grid_coverage(self, tmp_path):
        from poselift.experiment import run_ablation, emit_plot_data
        cfg = _tiny_experiment()
        rows = run_ablation(cfg, tmp_path / "abl", "rank")
        assert [r[0] for r in rows] == list(cfg.rank_grid)
        summary = (tmp_path / "abl" / "ablation_rank.csv").read_text().splitlines()
        assert summary[0] == "rank,adapted_mpjpe_mm,source_only_mpjpe_mm"
        assert len(summary) == 1 + len(cfg.rank_grid)
        written = emit_plot_data(tmp_path / "abl")
        names = {p.name for p in written}
        assert "mpjpe_vs_rank.csv" in names
        table = (tmp_path / "abl" / "plots" / "mpjpe_vs_rank.csv").read_text().splitlines()
        assert table[0] == "rank,mpjpe_mm"
        assert [ln.split(",")[0] for ln in table[1:]] == [str(r) for r in cfg.rank_grid]


class TestStreams:
    def test_stream_seed_stable_and_distinct(self):
        assert stream_seed(0, "pretrain") == stream_seed(0, "pretrain")
        assert stream_seed(0, "pretrain") != stream_seed(0, "adapt")
        assert stream_seed(0, "pretrain") != stream_seed(1, "pretrain")


TINY_INI = """\
[experiment]
seed = 0
frames = 4
source_windows = 6
target_windows = 4
eval_windows = 2
hypotheses = 2

[denoiser]
embed_dim = 16
num_heads = 2
depth = 1

[diffusion]
timesteps = 10

[pretrain]
learning_rate = 1e-3
num_steps = 2

[adapt]
num_steps = 2
"""


class TestCli:
    @pytest.fixture()
    def ini(self, tmp_path):
        p = tmp_path / "tiny.ini"
        p.write_text(TINY_INI)
        return str(p)

    def test_full_cli_workflow(self, ini, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["synth", "--config", ini, "--out", str(out / "data")]) == 0
        assert (out / "data" / "source" / "window_0000.p2d").exists()
        assert (out / "data" / "target" / "camera.cam").exists()

        assert main(["pretrain", "--config", ini, "--out", str(out)]) == 0
        ckpt = out / "pretrained.ckpt"
        assert ckpt.exists() and (out / "pretrain_loss.csv").exists()

        assert main(["adapt", "--config", ini, "--checkpoint", str(ckpt),
                     "--out", str(out)]) == 0
        assert (out / "adapted.ckpt").exists() and (out / "adapt_log.csv").exists()

        assert main(["eval", "--config", ini, "--checkpoint", str(out / "adapted.ckpt"),
                     "--label", "adapted", "--out", str(out)]) == 0
        report = io.read_metric_report(out / "metrics.csv")
        assert report[0]["model"] == "adapted"

        p2d = out / "data" / "target" / "window_0000.p2d"
        assert main(["infer", "--config", ini, "--checkpoint", str(ckpt),
                     "--pose2d", str(p2d),
                     "--camera", str(out / "data" / "target" / "camera.cam"),
                     "--out", str(out / "lifted.p3d")]) == 0
        lifted = io.read_pose3d(out / "lifted.p3d")
        assert lifted.coords.shape == (4, 17, 3)

        assert main(["report", "--run", str(out)]) == 0
        assert (out / "plots" / "loss_curve.csv").exists()
        assert (out / "plots" / "pretrain_loss_curve.csv").exists()
        capsys.readouterr()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[experiment]\nbogus = 1\n")
        assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
        capsys.readouterr()

    def test_runtime_error_exit_code(self, ini, tmp_path, capsys):
        assert main(["eval", "--config", ini, "--checkpoint",
                     str(tmp_path / "missing.ckpt"), "--out", str(tmp_path / "o")]) == 3
        capsys.readouterr()

    def test_seed_override_changes_data(self, ini, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--config", ini, "--seed", "1", "--out", str(a)]) == 0
        assert main(["synth", "--config", ini, "--seed", "2", "--out", str(b)]) == 0
        fa = (a / "source" / "window_0000.p3d").read_text()
        fb = (b / "source" / "window_0000.p3d").read_text()
        assert fa != fb

    def test_synth_deterministic(self, ini, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--config", ini, "--out", str(out)]) == 0
        fa = (a / "target" / "window_0001.p2d").read_bytes()
        fb = (b / "target" / "window_0001.p2d").read_bytes()
        assert fa == fb
