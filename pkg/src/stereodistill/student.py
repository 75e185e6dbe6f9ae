"""Monocular student: encoder-decoder with memorized max-pool indices,
trained on confidence-masked pseudo labels with the masked L1 loss.
Also hosts the segmentation head used by the transfer experiment.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .imageio import FloatMap, Image
from .numerics import (
    AdamState,
    LayerSpec,
    Network,
    Tensor,
    adam_step,
    masked_l1_loss,
    softmax_cross_entropy,
)
from .pseudogt import PseudoLabel
from .scenegen import CameraModel
from .teacher import disparity_to_depth

log = logging.getLogger(__name__)


class StudentError(ValueError):
    pass


@dataclass
class StudentConfig:
    width: int = 64
    height: int = 64
    in_channels: int = 3
    stage_channels: tuple[int, ...] = (16, 32, 64)
    max_disparity: int = 16
    epochs: int = 30
    batch_size: int = 4
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        factor = 2 ** len(self.stage_channels)
        if self.width % factor or self.height % factor:
            raise StudentError(
                f"input dims must be multiples of {factor}, got {self.width}x{self.height}"
            )


@dataclass
class SegHeadConfig:
    num_classes: int = 3
    epochs: int = 12
    batch_size: int = 4
    lr: float = 3e-4
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise StudentError("segmentation needs at least 2 classes")


def _trunk_specs(cfg: StudentConfig) -> tuple[list[LayerSpec], int]:
    """Encoder + mirrored decoder, returning specs and the head input width."""
    specs: list[LayerSpec] = []
    pool_ids: list[int] = []
    c_in = cfg.in_channels
    for c_out in cfg.stage_channels:
        specs += [
            LayerSpec("conv3x3", c_in, c_out),
            LayerSpec("batchnorm", c_out, c_out),
            LayerSpec("relu"),
            LayerSpec("conv3x3", c_out, c_out),
            LayerSpec("batchnorm", c_out, c_out),
            LayerSpec("relu"),
        ]
        specs.append(LayerSpec("maxpool2x2_indices"))
        pool_ids.append(len(specs) - 1)
        c_in = c_out
    chans = list(cfg.stage_channels)
    for stage in reversed(range(len(chans))):
        c_here = chans[stage]
        c_next = chans[stage - 1] if stage > 0 else chans[0]
        specs.append(LayerSpec("unpool2x2", pool_ref=pool_ids[stage]))
        specs += [
            LayerSpec("conv3x3", c_here, c_here),
            LayerSpec("batchnorm", c_here, c_here),
            LayerSpec("relu"),
            LayerSpec("conv3x3", c_here, c_next),
            LayerSpec("batchnorm", c_next, c_next),
            LayerSpec("relu"),
        ]
    return specs, chans[0]


def build_student(cfg: StudentConfig) -> Network:
    """Forward maps (N, C, H, W) -> (N, 1, H, W) in (0, 1)."""
    specs, head_in = _trunk_specs(cfg)
    specs.append(LayerSpec("conv3x3", head_in, 1))
    specs.append(LayerSpec("sigmoid"))
    return Network(specs, seed=cfg.seed)


def build_segmentation_net(cfg: StudentConfig, seg: SegHeadConfig) -> Network:
    """Same trunk with a K-channel logit head instead of the sigmoid head."""
    specs, head_in = _trunk_specs(cfg)
    specs.append(LayerSpec("conv3x3", head_in, seg.num_classes))
    return Network(specs, seed=seg.seed)


def transfer_trunk_weights(depth_net: Network, seg_net: Network) -> None:
    """Copy every shape-matching parameter (encoder + decoder) into seg_net."""
    src = depth_net.state_dict()
    for name, tensor in seg_net.params.items():
        if name in src and src[name].shape == tensor.data.shape:
            tensor.data = src[name].copy()
    for i, stats in seg_net.running.items():
        mkey, vkey = f"l{i:02d}.running_mean", f"l{i:02d}.running_var"
        if mkey in src:
            stats.mean = src[mkey].copy()
            stats.var = src[vkey].copy()


# -- training ------------------------------------------------------------------


def _image_to_nchw(img: Image) -> np.ndarray:
    return img.data.transpose(2, 0, 1)


def _stack_batch(samples, idx) -> tuple[Tensor, Tensor, Tensor]:
    xs = np.stack([_image_to_nchw(samples[i][0]) for i in idx])
    ys = np.stack([samples[i][1] for i in idx])[:, None]
    ms = np.stack([samples[i][2] for i in idx])[:, None]
    return Tensor(xs), Tensor(ys), Tensor(ms)


def _prepare(samples: list[tuple[Image, PseudoLabel]], max_disparity: int):
    """Normalize targets and drop empty-mask samples with a warning."""
    out = []
    for i, (img, label) in enumerate(samples):
        if not label.mask.any():
            log.warning("sample %d: empty confidence mask, skipped", i)
            continue
        target = np.where(label.mask, label.disparity.data, 0.0) / max_disparity
        out.append((img, target, label.mask.astype(np.float64)))
    return out


@dataclass
class TrainResult:
    net: Network
    best_epoch: int
    history: list[tuple[float, float]] = field(default_factory=list)  # (train, val)


def train_student(
    train_samples: list[tuple[Image, PseudoLabel]],
    val_samples: list[tuple[Image, PseudoLabel]],
    cfg: StudentConfig,
) -> TrainResult:
    """Adam on the confidence-masked L1 loss in normalized-disparity space.

    Returns the parameters of the epoch with the best validation loss.
    """
    train_set = _prepare(train_samples, cfg.max_disparity)
    val_set = _prepare(val_samples, cfg.max_disparity)
    if not train_set:
        raise StudentError("empty training dataset (all masks empty?)")
    net = build_student(cfg)
    state = AdamState(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history: list[tuple[float, float]] = []
    best_val = np.inf
    best_state = net.state_dict()
    best_epoch = -1
    n = len(train_set)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x, y, m = _stack_batch(train_set, idx)
            pred = net.forward(x, training=True)
            loss = masked_l1_loss(pred, y, m)
            net.zero_grad()
            loss.backward()
            adam_step(net.parameters(), state)
            total += loss.item() * idx.size
        train_loss = total / n
        val_loss = evaluate_masked_loss(net, val_set, cfg) if val_set else train_loss
        history.append((train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_state = net.state_dict()
            best_epoch = epoch
    net.load_state_dict(best_state)
    return TrainResult(net=net, best_epoch=best_epoch, history=history)


def evaluate_masked_loss(net: Network, prepared, cfg: StudentConfig) -> float:
    total = 0.0
    count = 0
    for start in range(0, len(prepared), cfg.batch_size):
        idx = range(start, min(start + cfg.batch_size, len(prepared)))
        x, y, m = _stack_batch(prepared, idx)
        pred = net.forward(x, training=False)
        total += masked_l1_loss(pred, y, m).item() * len(idx)
        count += len(idx)
    return total / count


def predict_disparity(left: Image, net: Network, cfg: StudentConfig) -> FloatMap:
    """Network output denormalized back to pixels (always valid)."""
    if (left.height, left.width) != (cfg.height, cfg.width):
        raise StudentError(
            f"input {left.width}x{left.height} does not match config "
            f"{cfg.width}x{cfg.height}"
        )
    out = net.forward(Tensor(_image_to_nchw(left)[None]), training=False)
    disp = out.data[0, 0] * cfg.max_disparity
    return FloatMap(disp, np.ones_like(disp, dtype=bool))


def predict_depth(left: Image, net: Network, cfg: StudentConfig, cam: CameraModel) -> FloatMap:
    """Monocular depth in meters from a single left image."""
    return disparity_to_depth(predict_disparity(left, net, cfg), cam)


# -- transfer to segmentation ------------------------------------------------------


def train_segmentation(
    samples: list[tuple[Image, np.ndarray]],
    cfg: StudentConfig,
    seg: SegHeadConfig,
    init_net: Network | None = None,
) -> tuple[Network, list[float]]:
    """Fine-tune the trunk with a softmax head; scratch when init_net is None."""
    if not samples:
        raise StudentError("empty segmentation dataset")
    k = seg.num_classes
    for _, lab in samples:
        if lab.max() >= k:
            raise StudentError(
                f"label {lab.max()} outside [0, {k}) - wrong num_classes?"
            )
    net = build_segmentation_net(cfg, seg)
    if init_net is not None:
        transfer_trunk_weights(init_net, net)
    state = AdamState(lr=seg.lr)
    rng = np.random.default_rng(seg.seed)
    xs = np.stack([_image_to_nchw(img) for img, _ in samples])
    ys = np.stack([lab for _, lab in samples]).astype(np.int64)
    n = len(samples)
    history = []
    for _ in range(seg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, seg.batch_size):
            idx = order[start : start + seg.batch_size]
            logits = net.forward(Tensor(xs[idx]), training=True)
            loss = softmax_cross_entropy(logits, ys[idx])
            net.zero_grad()
            loss.backward()
            adam_step(net.parameters(), state)
            total += loss.item() * idx.size
        history.append(total / n)
    return net, history


def predict_labels(img: Image, net: Network) -> np.ndarray:
    logits = net.forward(Tensor(_image_to_nchw(img)[None]), training=False)
    return np.argmax(logits.data[0], axis=0)
