"""Training losses: confidence-masked L1 regression, sigmoid BCE, and
per-pixel softmax cross-entropy with an ignore label.
"""
from __future__ import annotations

import numpy as np

from .tensor import NumericsError, Tensor

IGNORE_LABEL = -1


def masked_l1_loss(pred: Tensor, target: Tensor, mask: Tensor) -> Tensor:
    """Mean absolute error over mask==1 pixels: (1/sum M) * sum M |pred - target|.

    Gradient flows only through masked-in pixels of pred.
    """
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise NumericsError(
            f"masked_l1: shapes differ pred={pred.shape} target={target.shape} mask={mask.shape}"
        )
    mvals = mask.data
    if not np.all((mvals == 0.0) | (mvals == 1.0)):
        raise NumericsError("masked_l1: mask must be binary 0/1")
    total = mvals.sum()
    if total == 0:
        raise NumericsError("empty confidence mask")
    diff = pred.data - target.data
    out = Tensor(np.sum(mvals * np.abs(diff)) / total)
    out.requires_grad = pred.requires_grad or target.requires_grad
    if out.requires_grad:
        out._parents = (pred, target)
        sgn = mvals * np.sign(diff) / total

        def bwd(g):
            if pred.requires_grad:
                pred._accumulate_grad(float(g) * sgn)
            if target.requires_grad:
                target._accumulate_grad(-float(g) * sgn)

        out._backward = bwd
    return out


def bce_with_sigmoid_loss(logits: Tensor, labels: Tensor) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 labels.

    Evaluated in the log-sum-exp form so no log(0) occurs even for large |z|.
    """
    if logits.shape != labels.shape:
        raise NumericsError(
            f"bce: shapes differ logits={logits.shape} labels={labels.shape}"
        )
    y = labels.data
    if not np.all((y == 0.0) | (y == 1.0)):
        raise NumericsError("bce: labels must be binary 0/1")
    z = logits.data
    n = z.size
    # max(z,0) - z*y + log(1 + exp(-|z|))
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(per.sum() / n)
    out.requires_grad = logits.requires_grad
    if out.requires_grad:
        out._parents = (logits,)
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.clip(z, -745, None))),
                       np.exp(np.clip(z, None, 709)) / (1.0 + np.exp(np.clip(z, None, 709))))

        def bwd(g):
            logits._accumulate_grad(float(g) * (sig - y) / n)

        out._backward = bwd
    return out


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-probability of the true class over non-ignored pixels.

    logits: (N, K, H, W); labels: (N, H, W) int map with IGNORE_LABEL (-1)
    marking pixels excluded from the mean.
    """
    if logits.data.ndim != 4:
        raise NumericsError(f"softmax_ce: logits must be NKHW, got {logits.shape}")
    n, k, h, w = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n, h, w):
        raise NumericsError(
            f"softmax_ce: labels shape {labels.shape} != {(n, h, w)}"
        )
    keep = labels != IGNORE_LABEL
    if not np.any(keep):
        raise NumericsError("softmax_ce: all pixels ignored")
    if labels[keep].min() < 0 or labels[keep].max() >= k:
        raise NumericsError(f"softmax_ce: labels must lie in [0, {k})")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(denom)  # (N, K, H, W)

    safe = np.where(keep, labels, 0)
    picked = np.take_along_axis(logp, safe[:, None, :, :], axis=1)[:, 0]
    count = int(keep.sum())
    out = Tensor(-(picked * keep).sum() / count)
    out.requires_grad = logits.requires_grad
    if out.requires_grad:
        out._parents = (logits,)
        softmax = ez / denom

        def bwd(g):
            gz = softmax.copy()
            onehot = np.zeros_like(gz)
            np.put_along_axis(onehot, safe[:, None, :, :], 1.0, axis=1)
            gz -= onehot
            gz *= keep[:, None, :, :]
            logits._accumulate_grad(float(g) * gz / count)

        out._backward = bwd
    return out
