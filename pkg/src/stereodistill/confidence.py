"""Patch-based confidence estimation over disparity maps.

A small fully convolutional net scores each pixel's square disparity patch
with a logit; sigmoid gives a confidence in [0, 1]. Ground-truth confidence
labels follow the 3-pixel rule, and a left-right-consistency baseline is
provided for comparison.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .imageio import FloatMap
from .numerics import (
    AdamState,
    LayerSpec,
    Network,
    Tensor,
    adam_step,
    bce_with_sigmoid_loss,
)

log = logging.getLogger(__name__)

GT_CONFIDENCE_PIXELS = 3.0


class ConfidenceError(ValueError):
    pass


@dataclass
class ConfidenceNetConfig:
    patch_size: int = 9
    channels: int = 16
    epochs: int = 100
    lr: float = 1e-3
    lr_decay_every: int = 10
    lr_decay: float = 0.1
    batch_size: int = 256
    patches_per_sample: int = 600
    max_disparity: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.patch_size % 2 == 0 or self.patch_size < 3:
            raise ConfidenceError("patch_size must be odd and >= 3")
        # four 3x3 no-pad stages must collapse the patch to 1x1
        if self.patch_size - 1 != 2 * 4:
            raise ConfidenceError(
                f"patch_size {self.patch_size} incompatible with the 4-layer "
                "no-pad topology (needs patch_size == 9)"
            )

    @property
    def patch_radius(self) -> int:
        return self.patch_size // 2


def build_confidence_net(cfg: ConfidenceNetConfig) -> Network:
    c = cfg.channels
    specs = [
        LayerSpec("conv", 1, c, kernel=3),
        LayerSpec("relu"),
        LayerSpec("conv", c, c, kernel=3),
        LayerSpec("relu"),
        LayerSpec("conv", c, c, kernel=3),
        LayerSpec("relu"),
        LayerSpec("conv", c, c, kernel=3),
        LayerSpec("relu"),
        LayerSpec("conv", c, 1, kernel=1),
    ]
    return Network(specs, seed=cfg.seed)


def gt_confidence(pred: FloatMap, gt: FloatMap) -> tuple[np.ndarray, np.ndarray]:
    """3-pixel-rule labels: 1 iff |pred - gt| < 3 px.

    Returns (labels, labeled) where labeled marks pixels with both maps
    valid; only those carry usable labels.
    """
    if pred.data.shape != gt.data.shape:
        raise ConfidenceError(
            f"size mismatch: pred {pred.data.shape} vs gt {gt.data.shape}"
        )
    labeled = pred.valid & gt.valid
    labels = np.zeros(pred.data.shape, dtype=np.float64)
    close = np.abs(pred.data - gt.data) < GT_CONFIDENCE_PIXELS
    labels[labeled & close] = 1.0
    return labels, labeled


def _normalized(disp: FloatMap, max_disparity: int) -> np.ndarray:
    """Disparity scaled to [0, 1] with invalid pixels fed as 0."""
    return np.where(disp.valid, np.clip(disp.data, 0.0, None), 0.0) / max_disparity


def _extract_patches(
    norm: np.ndarray, ys: np.ndarray, xs: np.ndarray, radius: int
) -> np.ndarray:
    """(K, 1, P, P) patch stack centered at interior pixels (ys, xs)."""
    p = 2 * radius + 1
    windows = np.lib.stride_tricks.sliding_window_view(norm, (p, p))
    return windows[ys - radius, xs - radius][:, None, :, :]


def sample_training_patches(
    samples: list[tuple[FloatMap, FloatMap]],
    cfg: ConfidenceNetConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Pull labeled patches from (predicted, ground truth) disparity pairs."""
    patches = []
    labels = []
    r = cfg.patch_radius
    for pred, gt in samples:
        lab, labeled = gt_confidence(pred, gt)
        interior = np.zeros_like(labeled)
        interior[r:-r, r:-r] = True
        usable = labeled & interior
        if not usable.any():
            continue
        # stratify: up to half the budget from each class so the scores are
        # not compressed toward the (heavily positive) base rate
        half = cfg.patches_per_sample // 2
        sel_ys, sel_xs = [], []
        for cls_mask in (usable & (lab == 1.0), usable & (lab == 0.0)):
            ys, xs = np.nonzero(cls_mask)
            if ys.size == 0:
                continue
            take = min(half, ys.size)
            sel = rng.choice(ys.size, size=take, replace=False)
            sel_ys.append(ys[sel])
            sel_xs.append(xs[sel])
        ys = np.concatenate(sel_ys)
        xs = np.concatenate(sel_xs)
        norm = _normalized(pred, cfg.max_disparity)
        patches.append(_extract_patches(norm, ys, xs, r))
        labels.append(lab[ys, xs])
    if not patches:
        raise ConfidenceError("no labeled pixels available for confidence training")
    return np.concatenate(patches), np.concatenate(labels)


def train_confidence_net(
    samples: list[tuple[FloatMap, FloatMap]], cfg: ConfidenceNetConfig
) -> tuple[Network, list[float]]:
    """Train the patch net with sigmoid BCE; lr decays x0.1 every 10 epochs."""
    if len(samples) < 1:
        raise ConfidenceError("need at least one (pred, gt) training pair")
    rng = np.random.default_rng(cfg.seed)
    x_all, y_all = sample_training_patches(samples, cfg, rng)
    net = build_confidence_net(cfg)
    state = AdamState(lr=cfg.lr)
    n = x_all.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        state.lr = cfg.lr * (cfg.lr_decay ** (epoch // cfg.lr_decay_every))
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = net.forward(Tensor(x_all[idx]), training=True)
            loss = bce_with_sigmoid_loss(
                logits.reshape((idx.size,)), Tensor(y_all[idx])
            )
            net.zero_grad()
            loss.backward()
            adam_step(net.parameters(), state)
            total += loss.item() * idx.size
        history.append(total / n)
    return net, history


def training_accuracy(net: Network, patches: np.ndarray, labels: np.ndarray) -> float:
    logits = net.forward(Tensor(patches), training=False).data.reshape(-1)
    return float(np.mean((logits > 0) == (labels > 0.5)))


def predict_confidence_map(
    disp: FloatMap, net: Network, cfg: ConfidenceNetConfig
) -> FloatMap:
    """Sigmoid confidence per interior pixel; the border band of width
    patch_radius is zero and invalid disparity pixels get confidence 0."""
    h, w = disp.data.shape
    if h < cfg.patch_size or w < cfg.patch_size:
        raise ConfidenceError(
            f"map {w}x{h} smaller than patch size {cfg.patch_size}"
        )
    norm = _normalized(disp, cfg.max_disparity)
    logits = net.forward(Tensor(norm[None, None]), training=False).data[0, 0]
    r = cfg.patch_radius
    conf = np.zeros((h, w))
    conf[r : h - r, r : w - r] = 1.0 / (1.0 + np.exp(-np.clip(logits, -60.0, 60.0)))
    conf[~disp.valid] = 0.0
    return FloatMap(conf, conf > 0.0)


def lrc_confidence_baseline(disp_l: FloatMap, disp_r: FloatMap) -> FloatMap:
    """Hand-crafted baseline: C = exp(-|d_L(p) - d_R(p - d_L(p))|)."""
    h, w = disp_l.data.shape
    xs = np.arange(w)[None, :]
    proj = np.rint(xs - disp_l.data).astype(np.int64)
    inside = (proj >= 0) & (proj < w)
    proj_c = np.clip(proj, 0, w - 1)
    ys = np.arange(h)[:, None]
    partner = disp_r.data[ys, proj_c]
    ok = disp_l.valid & inside & disp_r.valid[ys, proj_c]
    conf = np.zeros((h, w))
    conf[ok] = np.exp(-np.abs(disp_l.data - partner)[ok])
    return FloatMap(conf, conf > 0.0)


def sparsification_curve(
    conf: FloatMap, pred: FloatMap, gt: FloatMap, steps: int = 20
) -> list[tuple[float, float]]:
    """(removed_fraction, mean |pred-gt| over retained) as the lowest-confidence
    pixels are removed first. Only pixels valid in pred and gt participate."""
    use = pred.valid & gt.valid
    err = np.abs(pred.data - gt.data)[use]
    c = conf.data[use]
    order = np.argsort(c, kind="stable")[::-1]  # keep most confident first
    err_sorted = err[order]
    n = err_sorted.size
    curve = []
    for k in range(steps):
        frac = k / steps
        keep = n - int(np.floor(frac * n))
        if keep < 1:
            break
        curve.append((frac, float(err_sorted[:keep].mean())))
    return curve
