"""Pseudo ground truth assembly: confidence-thresholded teacher disparity
with binary validity masks, plus the density/accuracy threshold sweep.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import FloatMap

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.3

SWEEP_HEADER = "tau\tdensity\tkept_mae\tstudent_rmse"


class PseudoGtError(ValueError):
    pass


@dataclass
class PseudoLabel:
    disparity: FloatMap
    mask: np.ndarray  # (H, W) bool
    tau: float

    @property
    def density(self) -> float:
        """Fraction of all image pixels kept by the mask."""
        return float(self.mask.mean())


def apply_threshold(disp: FloatMap, conf: FloatMap, tau: float) -> PseudoLabel:
    """Keep pixel p iff C(p) >= tau (inclusive) and the disparity is valid."""
    if disp.data.shape != conf.data.shape:
        raise PseudoGtError(
            f"size mismatch: disparity {disp.data.shape} vs confidence {conf.data.shape}"
        )
    if not (0.0 <= tau <= 1.0):
        raise PseudoGtError(f"tau must lie in [0, 1], got {tau}")
    mask = (conf.data >= tau) & disp.valid
    return PseudoLabel(disparity=disp.copy(), mask=mask, tau=tau)


@dataclass
class SweepRow:
    tau: float
    density: float
    kept_mae: float
    student_rmse: float  # NaN when every mask in the arm came up empty

    def tsv(self) -> str:
        return f"{self.tau:.10g}\t{self.density:.10g}\t{self.kept_mae:.10g}\t{self.student_rmse:.10g}"


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def write_tsv(self, path) -> None:
        lines = [SWEEP_HEADER] + [r.tsv() for r in self.rows]
        Path(path).write_text("\n".join(lines) + "\n")


def pooled_density(labels: list[PseudoLabel]) -> float:
    total = sum(l.mask.size for l in labels)
    kept = sum(int(l.mask.sum()) for l in labels)
    return kept / total


def kept_pixel_mae(labels: list[PseudoLabel], gts: list[FloatMap]) -> float:
    """Mean |pseudo - gt| pooled over kept pixels of the whole suite."""
    num = 0.0
    cnt = 0
    for lab, gt in zip(labels, gts):
        sel = lab.mask & gt.valid
        num += float(np.abs(lab.disparity.data - gt.data)[sel].sum())
        cnt += int(sel.sum())
    return num / cnt if cnt else float("nan")


def sweep_tau(
    disparities: list[FloatMap],
    confidences: list[FloatMap],
    gts: list[FloatMap],
    taus: list[float],
    train_arm,
) -> SweepResult:
    """Density / kept-pixel-MAE / student-RMSE sweep over thresholds.

    train_arm(labels: list[PseudoLabel]) -> float trains a fresh student on
    the thresholded labels under the caller's fixed budget and seed and
    returns held-out RMSE(lin). Arms whose masks are empty on every sample
    skip training and record NaN.
    """
    if list(taus) != sorted(taus):
        raise PseudoGtError("taus must be sorted ascending")
    rows = []
    for tau in taus:
        labels = [
            apply_threshold(d, c, tau) for d, c in zip(disparities, confidences)
        ]
        density = pooled_density(labels)
        mae = kept_pixel_mae(labels, gts)
        if all(not l.mask.any() for l in labels):
            log.warning("tau=%.3g: all masks empty, skipping student training", tau)
            rmse = float("nan")
        else:
            rmse = float(train_arm(labels))
        rows.append(SweepRow(tau=tau, density=density, kept_mae=mae, student_rmse=rmse))
    return SweepResult(rows)
