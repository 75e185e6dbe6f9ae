"""Depth evaluation metrics (threshold shares, relative errors, RMSEs) and
mean IoU for the segmentation transfer task.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import FloatMap

PRED_CLAMP_EPS = 1e-3
DELTA_THRESHOLDS = (1.25, 1.25**2, 1.25**3)

METRICS_HEADER = "rmse_lin\trmse_log\tabs_rel\tsqr_rel\tdelta1\tdelta2\tdelta3"


class MetricsError(ValueError):
    pass


@dataclass
class MetricsReport:
    rmse_lin: float
    rmse_log: float
    abs_rel: float
    sqr_rel: float
    delta1: float
    delta2: float
    delta3: float
    depth_cap: float
    n_pixels: int

    def tsv_row(self) -> str:
        vals = (
            self.rmse_lin,
            self.rmse_log,
            self.abs_rel,
            self.sqr_rel,
            self.delta1,
            self.delta2,
            self.delta3,
        )
        return "\t".join(f"{v:.10g}" for v in vals)


def compute_metrics(pred: FloatMap, gt: FloatMap, cap: float) -> MetricsReport:
    """Depth metrics over pixels where gt is valid and gt <= cap.

    Predictions are clamped to [1e-3, cap] so the log metric stays finite.
    """
    if pred.data.shape != gt.data.shape:
        raise MetricsError(
            f"size mismatch: pred {pred.data.shape} vs gt {gt.data.shape}"
        )
    sel = gt.valid & (gt.data <= cap)
    n = int(sel.sum())
    if n == 0:
        raise MetricsError("no valid ground-truth pixels under the cap")
    d = gt.data[sel]
    u = np.clip(pred.data[sel], PRED_CLAMP_EPS, cap)

    ratio = np.maximum(d / u, u / d)
    deltas = [float(np.mean(ratio < t)) for t in DELTA_THRESHOLDS]
    diff = d - u
    return MetricsReport(
        rmse_lin=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(d) - np.log(u)) ** 2))),
        abs_rel=float(np.mean(np.abs(diff) / d)),
        sqr_rel=float(np.mean(diff**2 / d)),
        delta1=deltas[0],
        delta2=deltas[1],
        delta3=deltas[2],
        depth_cap=cap,
        n_pixels=n,
    )


def mean_iou(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> float:
    """Mean per-class intersection-over-union.

    Classes absent from both prediction and ground truth are excluded from
    the mean; all present classes (background included) count.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise MetricsError(f"size mismatch: pred {pred.shape} vs gt {gt.shape}")
    for arr, name in ((pred, "pred"), (gt, "gt")):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise MetricsError(f"{name} labels outside [0, {num_classes})")
    ious = []
    for k in range(num_classes):
        p = pred == k
        g = gt == k
        union = int(np.logical_or(p, g).sum())
        if union == 0:
            continue
        ious.append(int(np.logical_and(p, g).sum()) / union)
    if not ious:
        raise MetricsError("no classes present in either map")
    return float(np.mean(ious))


LOWER_IS_BETTER = ("rmse_lin", "rmse_log", "abs_rel", "sqr_rel")
HIGHER_IS_BETTER = ("delta1", "delta2", "delta3")


def compare_reports(a: MetricsReport, b: MetricsReport) -> list[tuple[str, float, str]]:
    """Per-metric (name, a - b, verdict for a) with orientation applied."""
    if a.depth_cap != b.depth_cap:
        raise MetricsError(
            f"cannot compare reports with different caps: {a.depth_cap} vs {b.depth_cap}"
        )
    out = []
    for name in LOWER_IS_BETTER + HIGHER_IS_BETTER:
        delta = getattr(a, name) - getattr(b, name)
        if delta == 0.0:
            verdict = "equal"
        elif name in LOWER_IS_BETTER:
            verdict = "better" if delta < 0 else "worse"
        else:
            verdict = "better" if delta > 0 else "worse"
        out.append((name, delta, verdict))
    return out


def write_metrics_tsv(path, reports: dict[str, MetricsReport]) -> None:
    """Table rows in the canonical column order, one line per entry."""
    lines = ["name\t" + METRICS_HEADER + "\tn_pixels\tdepth_cap"]
    for name, rep in reports.items():
        lines.append(f"{name}\t{rep.tsv_row()}\t{rep.n_pixels}\t{rep.depth_cap:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")
