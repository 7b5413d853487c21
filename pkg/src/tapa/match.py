"""Affinity matrices between encoded questions and their CNN aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass
class AffinityStack:
    channels: Tensor  # C x n x m, or B x C x n x m
    valid_region: list[tuple[int, int]]

    @property
    def num_channels(self) -> int:
        return self.channels.shape[-3]


@dataclass
class ConvLayer:
    weight: Tensor  # k x c x f x f
    bias: Tensor    # k


@dataclass
class DenseLayer:
    weight: Tensor  # in x out
    bias: Tensor    # out


@dataclass
class AggregatorParams:
    convs: list[ConvLayer]  # empty when the CNN is bypassed
    hidden: list[DenseLayer]
    output: DenseLayer
    pool_size: int = 2

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for i, c in enumerate(self.convs, start=1):
            out[f"conv{i}.w"], out[f"conv{i}.b"] = c.weight, c.bias
        for i, d in enumerate(self.hidden):
            out[f"hidden{i}.w"], out[f"hidden{i}.b"] = d.weight, d.bias
        out["out.w"], out["out.b"] = self.output.weight, self.output.bias
        return out


def _pair_mask(mask_l, mask_r) -> np.ndarray:
    ml = np.asarray(mask_l, dtype=np.float64)
    mr = np.asarray(mask_r, dtype=np.float64)
    return ml[..., :, None] * mr[..., None, :]


def affinity(L: Tensor, R: Tensor, mask_l=None, mask_r=None) -> Tensor:
    """Cosine similarity of every row of ``L`` with every row of ``R``.

    Entries touching a masked position are exactly zero.
    """
    if L.shape[-1] != R.shape[-1]:
        raise DimensionError(f"encoded feature dims differ: {L.shape} vs {R.shape}")
    A = T.cosine_matrix(L, R)
    if mask_l is None and mask_r is None:
        return A
    mask_l = np.ones(L.shape[:-1]) if mask_l is None else mask_l
    mask_r = np.ones(R.shape[:-1]) if mask_r is None else mask_r
    return T.mul(A, _pair_mask(mask_l, mask_r))


def topic_affinity(TL: Tensor, TR: Tensor, mask_l=None, mask_r=None,
                   fusion: str = "late") -> Tensor:
    """Cosine affinity over raw topic rows (no encoder in between)."""
    if fusion != "late":
        raise ContractError("the topic affinity channel exists only in late-fusion mode")
    return affinity(TL, TR, mask_l, mask_r)


def stack_channels(a_emb: Tensor, a_topic: Tensor | None = None,
                   valid_region: Sequence[tuple[int, int]] | None = None) -> AffinityStack:
    """Stack the embedding (and optional topic) affinity as input channels.

    Accepts ``n x m`` or ``B x n x m`` matrices; the channel axis is inserted
    before the two spatial axes.
    """
    if a_topic is not None and a_topic.shape != a_emb.shape:
        raise DimensionError(f"affinity shapes differ: {a_emb.shape} vs {a_topic.shape}")
    planes = [a_emb] if a_topic is None else [a_emb, a_topic]
    channels = T.stack(planes, axis=a_emb.ndim - 2)
    if valid_region is None:
        valid_region = [a_emb.shape[-2:]] * (a_emb.shape[0] if a_emb.ndim == 3 else 1)
    return AffinityStack(channels, [tuple(r) for r in valid_region])


def conv_output_size(size: int, kernel: int, pool: int) -> int:
    """Spatial size after one valid conv (stride 1) and one non-overlapping pool."""
    conv = size - kernel + 1
    if conv < 1 or conv < pool:
        raise DimensionError(f"input size {size} too small for kernel {kernel} and pool {pool}")
    return (conv - pool) // pool + 1


def flattened_size(canvas: int, channels: int, filters: Sequence[int],
                   kernels: Sequence[int], pool: int) -> int:
    if tuple(filters) == (0, 0):
        return channels * canvas * canvas
    size = canvas
    for k in kernels:
        size = conv_output_size(size, k, pool)
    return filters[-1] * size * size


def init_aggregator(canvas: int, channels: int, filters: Sequence[int], kernels: Sequence[int],
                    hidden_widths: Sequence[int], pool: int, rng: np.random.Generator,
                    flat_width: int | None = None) -> AggregatorParams:
    """``flat_width`` overrides the derived MLP input width (used by the baseline head)."""
    convs = []
    if tuple(filters) != (0, 0):
        c_in = channels
        for i, (k, f) in enumerate(zip(filters, kernels), start=1):
            w = T.glorot_uniform(rng, (k, c_in, f, f), c_in * f * f, k * f * f)
            convs.append(ConvLayer(Tensor(w, True, f"conv{i}.w"), Tensor(np.zeros(k), True, f"conv{i}.b")))
            c_in = k
    width = flat_width or flattened_size(canvas, channels, filters, kernels, pool)
    hidden = []
    for i, out in enumerate(hidden_widths):
        hidden.append(DenseLayer(Tensor(T.glorot_uniform(rng, (width, out), width, out), True, f"hidden{i}.w"),
                                 Tensor(np.zeros(out), True, f"hidden{i}.b")))
        width = out
    output = DenseLayer(Tensor(T.glorot_uniform(rng, (width, 2), width, 2), True, "out.w"),
                        Tensor(np.zeros(2), True, "out.b"))
    return AggregatorParams(convs, hidden, output, pool)


def mlp_head(features: Tensor, params: AggregatorParams) -> Tensor:
    h = features
    for layer in params.hidden:
        h = T.relu(T.add(T.matmul(h, layer.weight), layer.bias))
    return T.add(T.matmul(h, params.output.weight), params.output.bias)


def aggregate(A: AffinityStack, params: AggregatorParams) -> Tensor:
    """Two conv+ReLU+max-pool layers, flatten, ReLU hidden layers, two logits.

    With no conv layers the affinity planes are flattened directly.
    """
    x = A.channels
    single = x.ndim == 3
    if single:
        x = T.reshape(x, (1,) + x.shape)
    for conv in params.convs:
        x = T.conv2d(x, conv.weight)
        x = T.relu(T.add(x, T.reshape(conv.bias, (1, -1, 1, 1))))
        x = T.maxpool2d(x, params.pool_size)
    x = T.reshape(x, (x.shape[0], -1))
    logits = mlp_head(x, params)
    return T.reshape(logits, (2,)) if single else logits
