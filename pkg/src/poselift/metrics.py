"""Pose evaluation metrics: MPJPE, Procrustes-aligned MPJPE, PCK, AUC."""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ShapeMismatchError
from .skeleton import PoseSequence3D, SkeletonSpec, root_relative

AUC_THRESHOLDS_MM = np.arange(5.0, 151.0, 5.0)  # 5, 10, ..., 150
PCK_THRESHOLD_MM = 150.0


@dataclass(frozen=True)
class MetricReport:
    mpjpe: float        # mm
    p_mpjpe: float      # mm
    pck: float          # percent at pck_threshold
    auc: float          # in [0, 1]
    pck_threshold: float = PCK_THRESHOLD_MM
    per_frame_mpjpe: np.ndarray = None

    def __post_init__(self):
        if self.p_mpjpe > self.mpjpe + 1e-9:
            raise ValueError("P-MPJPE cannot exceed MPJPE")
        if not (0 <= self.pck <= 100 and 0 <= self.auc <= 1):
            raise ValueError("PCK/AUC out of range")


def _check(pred, gt, what):
    if pred.coords.shape != gt.coords.shape:
        raise ShapeMismatchError(what, gt.coords.shape, pred.coords.shape)


def _root_rel_errors(pred: PoseSequence3D, gt: PoseSequence3D, skel: SkeletonSpec):
    """Per-(frame, joint) Euclidean error after root alignment, (T, J) mm."""
    p = root_relative(pred, skel).coords
    g = root_relative(gt, skel).coords
    return np.linalg.norm(p - g, axis=-1)


def mpjpe(pred: PoseSequence3D, gt: PoseSequence3D, skel: SkeletonSpec) -> float:
    """Root-relative mean per-joint position error in millimeters."""
    _check(pred, gt, "mpjpe")
    return float(_root_rel_errors(pred, gt, skel).mean())


def procrustes_align(pred_frame: np.ndarray, gt_frame: np.ndarray) -> np.ndarray:
    """Best-fit similarity transform (rotation + translation + uniform scale)
    of one (J, 3) frame onto another. Reflections excluded."""
    mu_p = pred_frame.mean(axis=0)
    mu_g = gt_frame.mean(axis=0)
    p = pred_frame - mu_p
    g = gt_frame - mu_g
    norm_p = np.linalg.norm(p)
    if norm_p < 1e-12 or np.linalg.matrix_rank(p) < 2:
        raise GeometryError("degenerate frame in Procrustes alignment")
    cov = g.T @ p
    u, s, vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(u @ vt))
    d = np.diag([1.0, 1.0, sign])
    rot = u @ d @ vt
    scale = (s[:2].sum() + sign * s[2]) / (norm_p ** 2)
    return scale * p @ rot.T + mu_g


def p_mpjpe(pred: PoseSequence3D, gt: PoseSequence3D) -> float:
    """MPJPE after per-frame Procrustes similarity alignment, millimeters."""
    _check(pred, gt, "p_mpjpe")
    errs = []
    for t in range(pred.frames):
        try:
            aligned = procrustes_align(pred.coords[t], gt.coords[t])
        except GeometryError as exc:
            raise GeometryError(f"{exc} (frame {t})") from exc
        errs.append(np.linalg.norm(aligned - gt.coords[t], axis=-1).mean())
    return float(np.mean(errs))


def pck(pred: PoseSequence3D, gt: PoseSequence3D, skel: SkeletonSpec,
        threshold: float = PCK_THRESHOLD_MM) -> float:
    """Percentage of (frame, joint) pairs with root-relative error < threshold."""
    if threshold <= 0:
        raise ValueError("PCK threshold must be positive")
    _check(pred, gt, "pck")
    err = _root_rel_errors(pred, gt, skel)
    return float((err < threshold).mean() * 100.0)


def auc(pred: PoseSequence3D, gt: PoseSequence3D, skel: SkeletonSpec) -> float:
    """Mean of PCK/100 over the 5..150 mm threshold grid (30 values)."""
    _check(pred, gt, "auc")
    err = _root_rel_errors(pred, gt, skel)
    return float(np.mean([(err < th).mean() for th in AUC_THRESHOLDS_MM]))


def evaluate(pred: PoseSequence3D, gt: PoseSequence3D, skel: SkeletonSpec) -> MetricReport:
    err = _root_rel_errors(pred, gt, skel)
    return MetricReport(
        mpjpe=float(err.mean()),
        p_mpjpe=p_mpjpe(pred, gt),
        pck=pck(pred, gt, skel),
        auc=auc(pred, gt, skel),
        per_frame_mpjpe=err.mean(axis=1),
    )


def evaluate_many(preds, gts, skel: SkeletonSpec) -> MetricReport:
    """Aggregate metrics over a list of (pred, gt) sequences."""
    errs = np.concatenate([_root_rel_errors(p, g, skel) for p, g in zip(preds, gts)])
    pm = float(np.mean([p_mpjpe(p, g) for p, g in zip(preds, gts)]))
    return MetricReport(
        mpjpe=float(errs.mean()),
        p_mpjpe=pm,
        pck=float((errs < PCK_THRESHOLD_MM).mean() * 100.0),
        auc=float(np.mean([(errs < th).mean() for th in AUC_THRESHOLDS_MM])),
        per_frame_mpjpe=errs.mean(axis=1),
    )
