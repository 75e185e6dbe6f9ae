"""Sequential network assembled from layer specs, with max-pool / unpool
index pairing and a named-parameter registry for checkpointing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    RunningStats,
    batchnorm_forward,
    conv2d_forward,
    linear_forward,
    maxpool2x2_with_indices,
    unpool2x2,
    uniform_fan_in_init,
)
from .tensor import NumericsError, Tensor, relu, sigmoid

CONV_KINDS = ("conv3x3", "conv")


@dataclass
class LayerSpec:
    """One layer of a sequential network.

    kind: conv3x3 | conv | batchnorm | relu | sigmoid | maxpool2x2_indices
          | unpool2x2 | linear
    conv3x3 implies kernel 3 with padding 1 (same-size); plain conv uses the
    given kernel with no padding. unpool2x2 must name the index of its paired
    maxpool layer via pool_ref.
    """

    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 3
    pool_ref: int = -1


class Network:
    def __init__(self, specs: list[LayerSpec], seed: int = 0):
        self._validate(specs)
        self.specs = specs
        self.params: dict[str, Tensor] = {}
        self.running: dict[int, RunningStats] = {}
        rng = np.random.default_rng(seed)
        for i, spec in enumerate(specs):
            if spec.kind in CONV_KINDS:
                k = 3 if spec.kind == "conv3x3" else spec.kernel
                fan_in = spec.in_channels * k * k
                w = uniform_fan_in_init(
                    rng, (spec.out_channels, spec.in_channels, k, k), fan_in
                )
                self.params[f"l{i:02d}.w"] = Tensor(w, requires_grad=True)
                self.params[f"l{i:02d}.b"] = Tensor(
                    np.zeros(spec.out_channels), requires_grad=True
                )
            elif spec.kind == "linear":
                w = uniform_fan_in_init(
                    rng, (spec.out_channels, spec.in_channels), spec.in_channels
                )
                self.params[f"l{i:02d}.w"] = Tensor(w, requires_grad=True)
                self.params[f"l{i:02d}.b"] = Tensor(
                    np.zeros(spec.out_channels), requires_grad=True
                )
            elif spec.kind == "batchnorm":
                c = spec.in_channels
                self.params[f"l{i:02d}.gamma"] = Tensor(np.ones(c), requires_grad=True)
                self.params[f"l{i:02d}.beta"] = Tensor(np.zeros(c), requires_grad=True)
                self.running[i] = RunningStats.create(c)

    @staticmethod
    def _validate(specs: list[LayerSpec]) -> None:
        for i, spec in enumerate(specs):
            if spec.kind == "unpool2x2":
                r = spec.pool_ref
                if not (0 <= r < i) or specs[r].kind != "maxpool2x2_indices":
                    raise NumericsError(
                        f"layer {i}: unpool2x2 must reference exactly one earlier "
                        f"maxpool layer, got pool_ref={r}"
                    )
            elif spec.kind in CONV_KINDS or spec.kind == "linear":
                if spec.in_channels <= 0 or spec.out_channels <= 0:
                    raise NumericsError(f"layer {i}: channel counts must be positive")

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        pooled: dict[int, object] = {}
        for i, spec in enumerate(self.specs):
            if spec.kind == "conv3x3":
                x = conv2d_forward(
                    x, self.params[f"l{i:02d}.w"], self.params[f"l{i:02d}.b"], padding=1
                )
            elif spec.kind == "conv":
                x = conv2d_forward(
                    x, self.params[f"l{i:02d}.w"], self.params[f"l{i:02d}.b"], padding=0
                )
            elif spec.kind == "linear":
                x = linear_forward(
                    x, self.params[f"l{i:02d}.w"], self.params[f"l{i:02d}.b"]
                )
            elif spec.kind == "batchnorm":
                x = batchnorm_forward(
                    x,
                    self.params[f"l{i:02d}.gamma"],
                    self.params[f"l{i:02d}.beta"],
                    self.running[i],
                    training,
                )
            elif spec.kind == "relu":
                x = relu(x)
            elif spec.kind == "sigmoid":
                x = sigmoid(x)
            elif spec.kind == "maxpool2x2_indices":
                x, pooled[i] = maxpool2x2_with_indices(x)
            elif spec.kind == "unpool2x2":
                x = unpool2x2(x, pooled[spec.pool_ref])
            else:
                raise NumericsError(f"unknown layer kind '{spec.kind}'")
        return x

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(k, self.params[k]) for k in sorted(self.params)]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def describe(self) -> str:
        lines = []
        for i, s in enumerate(self.specs):
            extra = ""
            if s.kind in CONV_KINDS or s.kind == "linear":
                k = 3 if s.kind == "conv3x3" else s.kernel
                extra = f" {s.in_channels}->{s.out_channels}" + (
                    f" k{k}" if s.kind != "linear" else ""
                )
            elif s.kind == "unpool2x2":
                extra = f" (pairs pool l{s.pool_ref:02d})"
            lines.append(f"l{i:02d} {s.kind}{extra}")
        return "\n".join(lines)

    # -- state I/O ------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {k: v.data.copy() for k, v in self.params.items()}
        for i, st in self.running.items():
            out[f"l{i:02d}.running_mean"] = st.mean.copy()
            out[f"l{i:02d}.running_var"] = st.var.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, v in self.params.items():
            if k not in state:
                raise NumericsError(f"state dict missing parameter '{k}'")
            if state[k].shape != v.data.shape:
                raise NumericsError(
                    f"parameter '{k}': shape {state[k].shape} != {v.data.shape}"
                )
            v.data = state[k].astype(np.float64).copy()
        for i, st in self.running.items():
            st.mean = state[f"l{i:02d}.running_mean"].astype(np.float64).copy()
            st.var = state[f"l{i:02d}.running_var"].astype(np.float64).copy()

    def save(self, path) -> None:
        save_checkpoint(path, self.state_dict())

    def load(self, path) -> None:
        self.load_state_dict(load_checkpoint(path))
