"""Differentiable layers: convolution, batch norm, max pooling with stored
indices, index-based unpooling, and a fully connected layer.

All spatial layers take NCHW tensors. Convolution is evaluated as an im2col
matrix product so the heavy lifting stays inside BLAS.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NumericsError, Tensor, check_finite

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


# -- convolution ---------------------------------------------------------------


def _im2col(x: np.ndarray, k: int, padding: int) -> tuple[np.ndarray, int, int]:
    """Unfold (N,C,H,W) into (N, C*k*k, H'*W') patch columns."""
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = h + 2 * padding - k + 1
    wo = w + 2 * padding - k + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    # windows: (N, C, Ho, Wo, k, k) -> (N, C*k*k, Ho*Wo)
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols: np.ndarray, x_shape, k: int, padding: int) -> np.ndarray:
    """Fold (N, C*k*k, Ho*Wo) patch columns back, summing overlaps."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = hp - k + 1
    wo = wp - k + 1
    out = np.zeros((n, c, hp, wp), dtype=np.float64)
    cols = cols.reshape(n, c, k, k, ho, wo)
    for di in range(k):
        for dj in range(k):
            out[:, :, di : di + ho, dj : dj + wo] += cols[:, :, di, dj]
    if padding:
        out = out[:, :, padding : hp - padding, padding : wp - padding]
    return out


def conv2d_forward(x: Tensor, weight: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    """2-D convolution (cross-correlation) of NCHW input with FCkk weights."""
    if x.data.ndim != 4:
        raise NumericsError(f"conv2d: input must be NCHW, got shape {x.shape}")
    if weight.data.ndim != 4:
        raise NumericsError(f"conv2d: weight must be FCkk, got shape {weight.shape}")
    n, c, h, w = x.shape
    f, cw, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise NumericsError(f"conv2d: kernel must be square and odd, got {k}x{k2}")
    if cw != c:
        raise NumericsError(
            f"conv2d: weight expects {cw} input channels, input has {c}"
        )
    if bias.data.shape != (f,):
        raise NumericsError(f"conv2d: bias shape {bias.shape} != ({f},)")
    if padding == 0 and (h < k or w < k):
        raise NumericsError(f"conv2d: input {h}x{w} smaller than kernel {k}")

    cols, ho, wo = _im2col(x.data, k, padding)
    e = c * k * k
    wmat = weight.data.reshape(f, e)
    out_data = wmat @ cols  # batched GEMM: (f,e) @ (n,e,p) -> (n,f,p)
    out_data += bias.data[None, :, None]
    out = Tensor(out_data.reshape(n, f, ho, wo))
    check_finite(out.data, "conv2d forward")

    out.requires_grad = x.requires_grad or weight.requires_grad or bias.requires_grad
    if out.requires_grad:
        out._parents = (x, weight, bias)

        def bwd(g):
            p = ho * wo
            gm = g.reshape(n, f, p)
            if bias.requires_grad:
                bias._accumulate_grad(gm.sum(axis=(0, 2)))
            if weight.requires_grad:
                gw = (gm @ cols.transpose(0, 2, 1)).sum(axis=0)
                weight._accumulate_grad(gw.reshape(f, c, k, k))
            if x.requires_grad:
                gcols = wmat.T @ gm  # (e,f) @ (n,f,p) -> (n,e,p)
                x._accumulate_grad(_col2im(gcols, x.data.shape, k, padding))

        out._backward = bwd
    return out


# -- pooling ---------------------------------------------------------------


@dataclass
class PoolIndices:
    """Argmax bookkeeping from a 2x2 max pool, consumed by unpool2x2.

    flat holds, per pooled cell, the argmax position flattened over the source
    H*W plane of its (n, c) slice.
    """

    input_shape: tuple[int, int, int, int]
    flat: np.ndarray  # (N, C, H/2, W/2) int64


def maxpool2x2_with_indices(x: Tensor) -> tuple[Tensor, PoolIndices]:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise NumericsError(f"maxpool2x2: H and W must be even, got {h}x{w}")
    ho, wo = h // 2, w // 2
    windows = x.data.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    flat_win = windows.reshape(n, c, ho, wo, 4)
    # argmax over the row-major window scan; ties resolve to the first slot
    local = np.argmax(flat_win, axis=-1)
    out_data = np.take_along_axis(flat_win, local[..., None], axis=-1)[..., 0]

    rows = 2 * np.arange(ho)[None, None, :, None] + local // 2
    colns = 2 * np.arange(wo)[None, None, None, :] + local % 2
    flat = rows * w + colns
    idx = PoolIndices((n, c, h, w), flat.astype(np.int64))

    out = Tensor(out_data)
    out.requires_grad = x.requires_grad
    if out.requires_grad:
        out._parents = (x,)

        def bwd(g):
            # argmax positions are unique per plane (disjoint windows)
            gx = np.zeros((n * c, h * w), dtype=np.float64)
            nc = np.repeat(np.arange(n * c), ho * wo)
            gx[nc, flat.reshape(n * c, -1).ravel()] = g.reshape(n * c, -1).ravel()
            x._accumulate_grad(gx.reshape(n, c, h, w))

        out._backward = bwd
    return out, idx


def unpool2x2(x: Tensor, indices: PoolIndices) -> Tensor:
    """Scatter pooled values back to their recorded argmax positions."""
    n, c, h, w = indices.input_shape
    if x.shape != (n, c, h // 2, w // 2):
        raise NumericsError(
            f"unpool2x2: input shape {x.shape} does not pair with pool over {indices.input_shape}"
        )
    flat = indices.flat
    if flat.min() < 0 or flat.max() >= h * w:
        raise NumericsError("unpool2x2: pooling index out of bounds")
    out_data = np.zeros((n, c, h * w), dtype=np.float64)
    nc = np.repeat(np.arange(n * c), flat.shape[2] * flat.shape[3])
    out_data.reshape(n * c, h * w)[nc, flat.reshape(n * c, -1).ravel()] = x.data.ravel()
    out = Tensor(out_data.reshape(n, c, h, w))
    out.requires_grad = x.requires_grad
    if out.requires_grad:
        out._parents = (x,)

        def bwd(g):
            gathered = g.reshape(n * c, h * w)[nc, flat.reshape(n * c, -1).ravel()]
            x._accumulate_grad(gathered.reshape(x.data.shape))

        out._backward = bwd
    return out


# -- batch normalization ---------------------------------------------------------------


@dataclass
class RunningStats:
    """Per-channel running mean/variance for batch norm inference."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def create(cls, channels: int) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels))

    def copy(self) -> "RunningStats":
        return RunningStats(self.mean.copy(), self.var.copy())


def batchnorm_forward(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    stats: RunningStats,
    training: bool,
) -> Tensor:
    if x.data.ndim != 4:
        raise NumericsError(f"batchnorm: input must be NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise NumericsError(
            f"batchnorm: gamma/beta must have shape ({c},), got {gamma.shape}/{beta.shape}"
        )
    axes = (0, 2, 3)
    m = n * h * w

    if training:
        if m < 2:
            raise NumericsError("batchnorm: need at least 2 values per channel in training")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        stats.mean = (1.0 - BN_MOMENTUM) * stats.mean + BN_MOMENTUM * mean
        stats.var = (1.0 - BN_MOMENTUM) * stats.var + BN_MOMENTUM * var
    else:
        mean = stats.mean
        var = stats.var

    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = Tensor(xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None])
    out.requires_grad = x.requires_grad or gamma.requires_grad or beta.requires_grad
    if out.requires_grad:
        out._parents = (x, gamma, beta)

        def bwd(g):
            if beta.requires_grad:
                beta._accumulate_grad(g.sum(axis=axes))
            if gamma.requires_grad:
                gamma._accumulate_grad((g * xhat).sum(axis=axes))
            if x.requires_grad:
                gxhat = g * gamma.data[None, :, None, None]
                if training:
                    # gradient through the batch statistics
                    s1 = gxhat.sum(axis=axes)
                    s2 = (gxhat * xhat).sum(axis=axes)
                    gx = (
                        gxhat
                        - (s1 / m)[None, :, None, None]
                        - xhat * (s2 / m)[None, :, None, None]
                    ) * inv_std[None, :, None, None]
                else:
                    gx = gxhat * inv_std[None, :, None, None]
                x._accumulate_grad(gx)

        out._backward = bwd
    return out


# -- fully connected ---------------------------------------------------------------


def linear_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = x @ W.T + b for (N, in) input and (out, in) weight."""
    if x.data.ndim != 2:
        raise NumericsError(f"linear: input must be (N, in), got shape {x.shape}")
    if x.shape[1] != weight.shape[1]:
        raise NumericsError(
            f"linear: input features {x.shape[1]} != weight in-features {weight.shape[1]}"
        )
    out = Tensor(x.data @ weight.data.T + bias.data[None, :])
    out.requires_grad = x.requires_grad or weight.requires_grad or bias.requires_grad
    if out.requires_grad:
        out._parents = (x, weight, bias)

        def bwd(g):
            if bias.requires_grad:
                bias._accumulate_grad(g.sum(axis=0))
            if weight.requires_grad:
                weight._accumulate_grad(g.T @ x.data)
            if x.requires_grad:
                x._accumulate_grad(g @ weight.data)

        out._backward = bwd
    return out


def uniform_fan_in_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Fan-in scaled uniform init U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
