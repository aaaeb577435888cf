"""Differentiable layers over float64 arrays.

Every layer implements an explicit forward and an explicit reverse-mode
backward.  forward caches what backward will need only when train=True;
eval-mode forward writes no instance state, so eval batches can be
sharded across threads.  backward consumes the cache of the matching
train-mode forward (state-error without one) and leaves parameter
gradients readable through ``gradients()``.

Convolution is cross-correlation (no kernel flip) and accumulates input
contributions in (in_channel, kernel_row, kernel_col) order, one
vectorized add per tap, so outputs are bit-identical to a naive loop
with the same ordering.  All max operations break ties toward the
lowest index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .activation import (
    group_maxout_backward,
    group_maxout_forward,
    gsmax_backward,
    gsmax_forward,
)
from .errors import LabelError, ShapeError, StateError
from .groups import GroupSpec
from .rng import Rng
from .tensor import init_scaled_uniform


def softmax_xent_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of a softmax over the last axis.

    Returns (scalar loss, gradient with respect to the logits); the
    gradient is (softmax - one_hot) / batch_size.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeError(f"expected (batch, classes) logits, got shape {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"labels shape {labels.shape} != ({logits.shape[0]},)")
    labels = labels.astype(np.intp)
    n, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"label outside 0..{c - 1}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    total = expz.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    loss = -float(log_probs[np.arange(n), labels].mean())
    grad = expz / total
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class Layer:
    """Base class fixing the forward/backward/caching contract."""

    kind = "?"

    def __init__(self):
        self._cache = None
        self._grads = {}

    def out_shape(self, in_shape):
        raise NotImplementedError

    def forward(self, x: np.ndarray, train: bool = False, rng: Rng | None = None):
        raise NotImplementedError

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> dict:
        """Live parameter arrays by name; optimizers mutate them in place."""
        return {}

    def gradients(self) -> dict:
        """Gradients from the most recent backward, keyed like parameters()."""
        return self._grads

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward without a train-mode forward")
        cache, self._cache = self._cache, None
        return cache


def _as_batch(x: np.ndarray, sample_shape) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != len(sample_shape) + 1 or x.shape[1:] != tuple(sample_shape):
        raise ShapeError(f"expected batch of {tuple(sample_shape)}, got shape {x.shape}")
    return x


class Dense(Layer):
    """Affine map on flattened samples: y = x W + b."""

    kind = "dense"

    def __init__(self, in_features: int, out_features: int, rng: Rng):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ShapeError(f"bad dense dimensions {in_features} -> {out_features}")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = init_scaled_uniform((in_features, out_features), in_features, rng)
        self.bias = np.zeros(out_features, dtype=np.float64)

    def out_shape(self, in_shape):
        if math.prod(in_shape) != self.in_features:
            raise ShapeError(f"dense expects fan-in {self.in_features}, got shape {in_shape}")
        return (self.out_features,)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2:
            raise ShapeError(f"dense expects a batch, got shape {x.shape}")
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.in_features:
            raise ShapeError(f"dense fan-in {self.in_features} != input {flat.shape[1]}")
        if train:
            self._cache = (flat, x.shape)
        return flat @ self.weight + self.bias

    def backward(self, upstream):
        flat, x_shape = self._take_cache()
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (flat.shape[0], self.out_features):
            raise ShapeError(f"upstream shape {upstream.shape} does not match dense output")
        self._grads = {"weight": flat.T @ upstream, "bias": upstream.sum(axis=0)}
        return (upstream @ self.weight.T).reshape(x_shape)


def _conv_geometry(h, w, kernel, stride, padding):
    """(out_h, out_w, top, left, bottom, right) for one spatial plane."""
    if padding == "valid":
        if kernel > h or kernel > w:
            raise ShapeError(f"kernel {kernel} exceeds input {h}x{w}")
        return (h - kernel) // stride + 1, (w - kernel) // stride + 1, 0, 0, 0, 0
    if padding == "same":
        oh = -(-h // stride)
        ow = -(-w // stride)
        pad_h = max((oh - 1) * stride + kernel - h, 0)
        pad_w = max((ow - 1) * stride + kernel - w, 0)
        return oh, ow, pad_h // 2, pad_w // 2, pad_h - pad_h // 2, pad_w - pad_w // 2
    raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")


class Conv2d(Layer):
    """2-d cross-correlation over NCHW batches with square kernels."""

    kind = "conv2d"

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: Rng,
        stride: int = 1,
        padding: str = "valid",
    ):
        super().__init__()
        if min(in_channels, out_channels, kernel, stride) < 1:
            raise ShapeError("conv2d dimensions must be positive")
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel * kernel
        self.filters = init_scaled_uniform(
            (out_channels, in_channels, kernel, kernel), fan_in, rng
        )
        self.bias = np.zeros(out_channels, dtype=np.float64)

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(f"conv2d expects ({self.in_channels}, H, W), got {in_shape}")
        geo = self._geometry(in_shape[1], in_shape[2])
        return (self.out_channels, geo[0], geo[1])

    def _geometry(self, h, w):
        return _conv_geometry(h, w, self.kernel, self.stride, self.padding)

    def parameters(self):
        return {"filters": self.filters, "bias": self.bias}

    def _pad(self, x, top, left, bottom, right):
        if top == left == bottom == right == 0:
            return x
        return np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"conv2d expects (N, {self.in_channels}, H, W), got {x.shape}")
        oh, ow, top, left, bottom, right = self._geometry(x.shape[2], x.shape[3])
        xp = self._pad(x, top, left, bottom, right)
        n = x.shape[0]
        s, k = self.stride, self.kernel
        out = np.zeros((n, self.out_channels, oh, ow), dtype=np.float64)
        # one add per kernel tap, in (ci, kh, kw) order: matches a naive
        # loop accumulating in the same order, addition by addition
        for ci in range(self.in_channels):
            for dh in range(k):
                for dw in range(k):
                    patch = xp[:, ci, dh : dh + s * oh : s, dw : dw + s * ow : s]
                    out += patch[:, None, :, :] * self.filters[None, :, ci, dh, dw, None, None]
        out += self.bias[None, :, None, None]
        if train:
            self._cache = (xp, x.shape, (oh, ow, top, left))
        return out

    def backward(self, upstream):
        xp, x_shape, (oh, ow, top, left) = self._take_cache()
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (x_shape[0], self.out_channels, oh, ow):
            raise ShapeError(f"upstream shape {upstream.shape} does not match conv output")
        s, k = self.stride, self.kernel
        dxp = np.zeros_like(xp)
        dfilters = np.zeros_like(self.filters)
        for ci in range(self.in_channels):
            for dh in range(k):
                for dw in range(k):
                    patch = xp[:, ci, dh : dh + s * oh : s, dw : dw + s * ow : s]
                    dfilters[:, ci, dh, dw] = np.tensordot(
                        upstream, patch, axes=([0, 2, 3], [0, 1, 2])
                    )
                    dxp[:, ci, dh : dh + s * oh : s, dw : dw + s * ow : s] += np.tensordot(
                        upstream, self.filters[:, ci, dh, dw], axes=(1, 0)
                    )
        self._grads = {"filters": dfilters, "bias": upstream.sum(axis=(0, 2, 3))}
        return dxp[:, :, top : top + x_shape[2], left : left + x_shape[3]]


class MaxPool2d(Layer):
    """Window-wise max over NCHW batches; ties go to the lowest flat index."""

    kind = "maxpool2d"

    def __init__(self, kernel: int, stride: int):
        super().__init__()
        if kernel < 1 or stride < 1:
            raise ShapeError(f"bad pooling geometry kernel={kernel} stride={stride}")
        self.kernel = kernel
        self.stride = stride

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool2d expects (C, H, W), got {in_shape}")
        c, h, w = in_shape
        if self.kernel > h or self.kernel > w:
            raise ShapeError(f"kernel {self.kernel} exceeds input {h}x{w}")
        oh = (h - self.kernel) // self.stride + 1
        ow = (w - self.kernel) // self.stride + 1
        return (c, oh, ow)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ShapeError(f"maxpool2d expects (N, C, H, W), got {x.shape}")
        n, c, h, w = x.shape
        _, oh, ow = self.out_shape(x.shape[1:])
        k, s = self.kernel, self.stride
        out = np.empty((n, c, oh, ow), dtype=np.float64)
        argmax = np.empty((n, c, oh, ow), dtype=np.intp)
        for r in range(oh):
            for q in range(ow):
                window = x[:, :, r * s : r * s + k, q * s : q * s + k].reshape(n, c, k * k)
                local = window.argmax(axis=2)     # first max = lowest flat index
                out[:, :, r, q] = np.take_along_axis(window, local[:, :, None], 2)[:, :, 0]
                argmax[:, :, r, q] = (r * s + local // k) * w + (q * s + local % k)
        if train:
            self._cache = (argmax, x.shape)
        return out

    def backward(self, upstream):
        argmax, x_shape = self._take_cache()
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != argmax.shape:
            raise ShapeError(f"upstream shape {upstream.shape} does not match pool output")
        n, c, h, w = x_shape
        dx = np.zeros((n, c, h * w), dtype=np.float64)
        rows = np.arange(n)[:, None, None, None]
        cols = np.arange(c)[None, :, None, None]
        # overlapping windows may route into the same cell: accumulate
        np.add.at(dx, (rows, cols, argmax), upstream)
        return dx.reshape(x_shape)


class Relu(Layer):
    """Elementwise max(x, 0); the derivative at exactly 0 is taken as 0."""

    kind = "relu"

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if train:
            self._cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, upstream):
        mask = self._take_cache()
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != mask.shape:
            raise ShapeError(f"upstream shape {upstream.shape} does not match relu input")
        return upstream * mask


class Dropout(Layer):
    """Inverted dropout: keep with probability ``keep``, scale by 1/keep at
    train time, identity at eval time.  ``fixed_mask`` pins the mask (same
    shape as the input, entries 0/1) for deterministic differentiation."""

    kind = "dropout"

    def __init__(self, keep: float, fixed_mask: np.ndarray | None = None):
        super().__init__()
        if not 0.0 < keep <= 1.0:
            raise ValueError(f"keep probability must be in (0, 1], got {keep}")
        self.keep = float(keep)
        self.fixed_mask = None if fixed_mask is None else np.asarray(fixed_mask, dtype=np.float64)

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if not train:
            return x
        if self.fixed_mask is not None:
            if self.fixed_mask.shape != x.shape:
                raise ShapeError(
                    f"fixed mask shape {self.fixed_mask.shape} != input {x.shape}"
                )
            mask = self.fixed_mask
        else:
            if rng is None:
                raise StateError("dropout needs an rng in training mode")
            mask = (rng.uniform_array(x.shape) < self.keep).astype(np.float64)
        scaled = mask / self.keep
        self._cache = scaled
        return x * scaled

    def backward(self, upstream):
        scaled = self._take_cache()
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != scaled.shape:
            raise ShapeError(f"upstream shape {upstream.shape} does not match dropout input")
        return upstream * scaled


def _channels_last_2d(x):
    """(N, C, H, W) -> ((N*H*W, C), restore); (N, C) passes through."""
    if x.ndim == 2:
        return x, lambda y: y
    if x.ndim == 4:
        n, c, h, w = x.shape
        flat = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(n * h * w, c)

        def restore(y):
            return y.reshape(n, h, w, -1).transpose(0, 3, 1, 2)

        return flat, restore
    raise ShapeError(f"expected (N, C) or (N, C, H, W), got shape {x.shape}")


class Gsmax(Layer):
    """Grouped softmax with a ground state over the channel axis."""

    kind = "gsmax"

    def __init__(self, groups: GroupSpec, temperature: float = 1.0):
        super().__init__()
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        self.groups = groups
        self.temperature = float(temperature)

    def out_shape(self, in_shape):
        self.groups.check_channels(in_shape[0])
        return tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        flat, restore = _channels_last_2d(x)
        p = gsmax_forward(flat, self.groups, self.temperature)
        if train:
            self._cache = p
        return restore(p)

    def backward(self, upstream):
        p = self._take_cache()
        upstream = np.asarray(upstream, dtype=np.float64)
        flat, restore = _channels_last_2d(upstream)
        if flat.shape != p.shape:
            raise ShapeError(f"upstream shape {upstream.shape} does not match outputs")
        return restore(gsmax_backward(p, flat, self.groups, self.temperature))


class GroupMaxout(Layer):
    """Per-group maximum over the channel axis: C channels -> G channels."""

    kind = "group_maxout"

    def __init__(self, groups: GroupSpec):
        super().__init__()
        self.groups = groups

    def out_shape(self, in_shape):
        self.groups.check_channels(in_shape[0])
        return (self.groups.n_groups, *in_shape[1:])

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        flat, restore = _channels_last_2d(x)
        values, argmax = group_maxout_forward(flat, self.groups)
        if train:
            self._cache = argmax
        return restore(values)

    def backward(self, upstream):
        argmax = self._take_cache()
        upstream = np.asarray(upstream, dtype=np.float64)
        flat, restore = _channels_last_2d(upstream)
        if flat.shape != argmax.shape:
            raise ShapeError(f"upstream shape {upstream.shape} does not match outputs")
        return restore(group_maxout_backward(flat, argmax, self.groups))


class Identity(Layer):
    """Pass-through; stands in for an activation in control runs."""

    kind = "identity"

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if train:
            self._cache = x.shape
        return x

    def backward(self, upstream):
        shape = self._take_cache()
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != shape:
            raise ShapeError(f"upstream shape {upstream.shape} does not match input")
        return upstream


class SoftmaxXentHead(Layer):
    """Classification head: forward emits class probabilities; the loss
    and the gradient with respect to the incoming logits come from
    ``loss(labels)`` after a train-mode forward."""

    kind = "softmax_xent_head"

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"head expects flat (classes,) input, got {in_shape}")
        return tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeError(f"head expects (batch, classes), got shape {x.shape}")
        if train:
            self._cache = x
        shifted = x - x.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        return expz / expz.sum(axis=1, keepdims=True)

    def loss(self, labels):
        """(mean cross-entropy, gradient w.r.t. the cached logits)."""
        logits = self._take_cache()
        return softmax_xent_loss(logits, labels)

    def backward(self, upstream):
        raise StateError("the loss head propagates through loss(labels), not backward()")


LAYER_KINDS = {
    cls.kind: cls
    for cls in (
        Dense,
        Conv2d,
        MaxPool2d,
        Relu,
        Dropout,
        Gsmax,
        GroupMaxout,
        Identity,
        SoftmaxXentHead,
    )
}


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description; fan-in is inferred at build time."""

    kind: str
    params: dict = field(default_factory=dict)


def build_layer(spec: LayerSpec, in_shape, rng: Rng) -> Layer:
    """Construct one layer for the given incoming sample shape."""
    if spec.kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {spec.kind!r}")
    params = dict(spec.params)
    if spec.kind == "dense":
        layer = Dense(math.prod(in_shape), params.pop("units"), rng, **params)
    elif spec.kind == "conv2d":
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d needs (C, H, W) input, got {in_shape}")
        layer = Conv2d(in_shape[0], params.pop("out_channels"), params.pop("kernel"), rng, **params)
    elif spec.kind in ("gsmax", "group_maxout"):
        groups = params.pop("groups", None)
        if groups is None:
            groups = GroupSpec.from_sizes(params.pop("group_sizes"))
        layer = LAYER_KINDS[spec.kind](groups, **params)
    else:
        layer = LAYER_KINDS[spec.kind](**params)
    layer.out_shape(in_shape)     # validates compatibility eagerly
    return layer
