"""Line-oriented file formats: pose sequences, cameras, metric reports,
step logs, and the model checkpoint."""

import json
from pathlib import Path

import numpy as np
import torch

from .camera import CameraIntrinsics
from .denoiser import DenoiserConfig, DenoiserModel
from .errors import ConfigError, ShapeMismatchError
from .skeleton import PoseSequence2D, PoseSequence3D

_FMT = "%.9g"


def _write_pose(path, tag, coords):
    T, J, C = coords.shape
    lines = [f"{tag} v1 frames={T} joints={J}"]
    for t in range(T):
        lines.append(" ".join(_FMT % v for v in coords[t].ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_pose(path, tag, ncoord):
    lines = Path(path).read_text().strip().split("\n")
    head = lines[0].split()
    if len(head) != 4 or head[0] != tag or head[1] != "v1":
        raise ConfigError(f"{path}: malformed {tag} header: {lines[0]!r}")
    T = int(head[2].split("=")[1])
    J = int(head[3].split("=")[1])
    if len(lines) != T + 1:
        raise ConfigError(f"{path}: expected {T} data lines, found {len(lines) - 1}")
    data = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if data.shape != (T, J * ncoord):
        raise ShapeMismatchError(str(path), (T, J * ncoord), data.shape)
    return data.reshape(T, J, ncoord)


def write_pose3d(path, pose: PoseSequence3D):
    _write_pose(path, "P3D", pose.coords)


def read_pose3d(path) -> PoseSequence3D:
    return PoseSequence3D(_read_pose(path, "P3D", 3))


def write_pose2d(path, pose: PoseSequence2D):
    _write_pose(path, "P2D", pose.coords)


def read_pose2d(path) -> PoseSequence2D:
    return PoseSequence2D(_read_pose(path, "P2D", 2))


def write_camera(path, cam: CameraIntrinsics):
    Path(path).write_text(
        "CAM v1 %s %s %s %s %d %d\n"
        % (_FMT % cam.fx, _FMT % cam.fy, _FMT % cam.cx, _FMT % cam.cy,
           cam.width, cam.height))


def read_camera(path) -> CameraIntrinsics:
    parts = Path(path).read_text().split()
    if len(parts) != 8 or parts[0] != "CAM" or parts[1] != "v1":
        raise ConfigError(f"{path}: malformed camera file")
    fx, fy, cx, cy = (float(v) for v in parts[2:6])
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy,
                            width=int(parts[6]), height=int(parts[7]))


REPORT_HEADER = "split,model,mpjpe_mm,p_mpjpe_mm,pck150,auc"


def write_metric_report(path, rows):
    """rows: list of (split, model, MetricReport)."""
    lines = [REPORT_HEADER]
    for split, model, r in rows:
        lines.append("%s,%s,%.6f,%.6f,%.6f,%.6f"
                     % (split, model, r.mpjpe, r.p_mpjpe, r.pck, r.auc))
    Path(path).write_text("\n".join(lines) + "\n")


def read_metric_report(path):
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != REPORT_HEADER:
        raise ConfigError(f"{path}: unexpected report header {lines[0]!r}")
    rows = []
    for ln in lines[1:]:
        split, model, *vals = ln.split(",")
        rows.append({"split": split, "model": model,
                     "mpjpe_mm": float(vals[0]), "p_mpjpe_mm": float(vals[1]),
                     "pck150": float(vals[2]), "auc": float(vals[3])})
    return rows


STEP_LOG_HEADER = "step,loss,pseudo_reproj_px,H"


def write_step_log(path, log):
    lines = [STEP_LOG_HEADER]
    for rec in log:
        lines.append("%d,%.9g,%.9g,%d"
                     % (rec["step"], rec["loss"], rec["pseudo_reproj_px"], rec["H"]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_step_log(path):
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != STEP_LOG_HEADER:
        raise ConfigError(f"{path}: unexpected step log header")
    out = []
    for ln in lines[1:]:
        s, l, r, h = ln.split(",")
        out.append({"step": int(s), "loss": float(l),
                    "pseudo_reproj_px": float(r), "H": int(h)})
    return out


def write_loss_log(path, losses):
    lines = ["step,loss"] + ["%d,%.9g" % (i, v) for i, v in enumerate(losses)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_log(path):
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != "step,loss":
        raise ConfigError(f"{path}: unexpected loss log header")
    return [float(ln.split(",")[1]) for ln in lines[1:]]


CHECKPOINT_MAGIC = b"PLCKPT v1\n"


def save_checkpoint(path, model: DenoiserModel):
    """Byte-stable binary checkpoint: magic, config JSON line, then one
    (name, shape, dtype, raw little-endian data) record per parameter."""
    cfg = model.config
    header = {
        "format_version": 1,
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "dtype": str(model.input_proj.weight.dtype).replace("torch.", ""),
    }
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for name, p in model.state_dict().items():
            a = p.detach().cpu().numpy()
            a = np.ascontiguousarray(a)
            shape = ",".join(str(s) for s in a.shape)
            f.write(f"{name} {shape or 'scalar'} {a.dtype.str} {a.nbytes}\n".encode())
            f.write(a.tobytes())


def load_checkpoint(path) -> DenoiserModel:
    with open(path, "rb") as f:
        if f.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        header = json.loads(f.readline().decode())
        cfg = DenoiserConfig(**header["config"])
        dtype = getattr(torch, header["dtype"])
        model = DenoiserModel(cfg, dtype=dtype)
        state = model.state_dict()
        loaded = {}
        while True:
            line = f.readline()
            if not line:
                break
            name, shape_s, dtype_s, nbytes = line.decode().split()
            shape = () if shape_s == "scalar" else tuple(int(s) for s in shape_s.split(","))
            raw = f.read(int(nbytes))
            a = np.frombuffer(raw, dtype=np.dtype(dtype_s)).reshape(shape)
            if name not in state:
                raise ConfigError(f"{path}: unknown parameter {name}")
            if tuple(state[name].shape) != shape:
                raise ShapeMismatchError(f"checkpoint parameter {name}",
                                         tuple(state[name].shape), shape)
            loaded[name] = torch.as_tensor(a.copy())
        missing = set(state) - set(loaded)
        if missing:
            raise ConfigError(f"{path}: missing parameters {sorted(missing)}")
        model.load_state_dict(loaded)
        return model
