"""Network assembly, the optimizer, and the training loop.

A Network is an ordered stack of layers validated shape-to-shape at
build time.  Training is single-owner and single-threaded; eval-mode
forward passes are pure, so they run in fixed-size chunks that an
optional thread pool may process concurrently.  The chunk boundaries
never depend on the worker count, so every worker count produces
bit-identical outputs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, StateError
from .layers import LayerSpec, SoftmaxXentHead, build_layer
from .rng import Rng

EVAL_CHUNK = 256    # fixed eval batch: worker counts must not change results


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule: lr(epoch) = base_lr * factor^(epoch // every)."""

    base_lr: float
    epochs: int
    batch_size: int
    seed: int
    lr_decay_factor: float = 1.0
    lr_decay_every_epochs: int = 1
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError(f"bad epochs={self.epochs} or batch_size={self.batch_size}")
        if self.lr_decay_factor <= 0 or self.lr_decay_every_epochs < 1:
            raise ValueError("lr decay factor must be > 0 and period >= 1")


def learning_rate(config: TrainConfig, epoch: int) -> float:
    return config.base_lr * config.lr_decay_factor ** (epoch // config.lr_decay_every_epochs)


def sgd_momentum_step(params: dict, grads: dict, velocity: dict, config: TrainConfig, epoch: int):
    """v <- momentum v - lr (g + weight_decay p); p <- p + v, in place."""
    lr = learning_rate(config, epoch)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ShapeError(f"missing gradient for parameter {name!r}")
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(p)
            velocity[name] = v
        v *= config.momentum
        v -= lr * (g + config.weight_decay * p)
        p += v
    return params, velocity


class Network:
    """Ordered layer stack with shape checking and named parameters."""

    def __init__(self, input_shape, layers):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = list(layers)
        shape = self.input_shape
        self.shapes = [shape]
        for layer in self.layers:
            shape = layer.out_shape(shape)
            self.shapes.append(shape)

    @classmethod
    def from_specs(cls, input_shape, specs, rng: Rng) -> "Network":
        layers = []
        shape = tuple(int(s) for s in input_shape)
        for spec in specs:
            layer = build_layer(spec, shape, rng)
            shape = layer.out_shape(shape)
            layers.append(layer)
        return cls(input_shape, layers)

    def forward(self, x, train: bool = False, rng: Rng | None = None) -> list:
        """All intermediate activations, one per layer, input excluded."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"batch of {self.input_shape} expected, got shape {x.shape}")
        activations = []
        out = x
        for layer in self.layers:
            out = layer.forward(out, train=train, rng=rng)
            activations.append(out)
        return activations

    def loss(self, labels):
        """(mean loss, gradient w.r.t. head input) after a train forward."""
        if not self.layers or not isinstance(self.layers[-1], SoftmaxXentHead):
            raise StateError("loss requires the network to end in a softmax_xent_head")
        return self.layers[-1].loss(labels)

    def backward(self, upstream) -> np.ndarray:
        """Propagate a gradient to the input, filling parameter gradients.

        When the stack ends in a loss head, ``upstream`` is the gradient
        with respect to the head's input as returned by ``loss``.
        """
        tail = self.layers
        if tail and isinstance(tail[-1], SoftmaxXentHead):
            tail = tail[:-1]
        g = upstream
        for layer in reversed(tail):
            g = layer.backward(g)
        return g

    def parameters(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.parameters().items():
                out[f"layer{i:02d}.{name}"] = arr
        return out

    def gradients(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.gradients().items():
                out[f"layer{i:02d}.{name}"] = arr
        return out

    def load_parameters(self, tensors: dict) -> None:
        """Copy values into the live parameter arrays, names and shapes
        must match exactly."""
        params = self.parameters()
        if set(tensors) != set(params):
            missing = sorted(set(params) - set(tensors))
            extra = sorted(set(tensors) - set(params))
            raise ShapeError(f"parameter names differ: missing {missing}, extra {extra}")
        for name, p in params.items():
            t = np.asarray(tensors[name], dtype=np.float64)
            if t.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {t.shape} != model shape {p.shape}")
            p[...] = t


def eval_outputs(net: Network, x, workers: int = 1, capture: int | None = None):
    """Eval-mode forward over fixed 256-sample chunks.

    Returns (final layer output, captured layer output or None).  Workers
    parallelize whole chunks and results are concatenated in input order;
    because the chunking is independent of the worker count, outputs are
    bit-identical for any ``workers``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ShapeError("eval_outputs needs at least one sample")
    chunks = [
        slice(start, min(start + EVAL_CHUNK, x.shape[0]))
        for start in range(0, x.shape[0], EVAL_CHUNK)
    ]

    def run(sl):
        acts = net.forward(x[sl], train=False)
        return acts[-1], (acts[capture] if capture is not None else None)

    if workers <= 1 or len(chunks) == 1:
        parts = [run(sl) for sl in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    final = np.concatenate([p[0] for p in parts], axis=0)
    captured = None
    if capture is not None:
        captured = np.concatenate([p[1] for p in parts], axis=0)
    return final, captured


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_super_acc: float
    test_super_acc: float
    lr: float


def train_network(
    net: Network,
    train_x,
    train_labels,
    test_x,
    test_labels,
    config: TrainConfig,
    rng: Rng,
    workers: int = 1,
) -> list:
    """Minibatch SGD with momentum; returns one EpochMetrics per epoch.

    Training itself is always single-threaded and consumes ``rng`` in a
    fixed order (per-epoch shuffle, then any dropout draws batch by
    batch), so a given (network init, rng state) pair reproduces the run
    exactly.  ``workers`` only parallelizes the per-epoch test pass.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    test_x = np.asarray(test_x, dtype=np.float64)
    test_labels = np.asarray(test_labels)
    n = train_x.shape[0]
    if n == 0 or train_labels.shape != (n,):
        raise ShapeError("training samples and labels must be non-empty and aligned")

    velocity = {}
    metrics = []
    for epoch in range(config.epochs):
        order = np.arange(n)
        rng.shuffle(order)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_x = train_x[idx]
            batch_y = train_labels[idx]
            activations = net.forward(batch_x, train=True, rng=rng)
            loss, dlogits = net.loss(batch_y)
            net.backward(dlogits)
            sgd_momentum_step(net.parameters(), net.gradients(), velocity, config, epoch)
            loss_sum += loss * idx.size
            correct += int((activations[-1].argmax(axis=1) == batch_y).sum())
        test_probs, _ = eval_outputs(net, test_x, workers=workers)
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / n,
                train_super_acc=correct / n,
                test_super_acc=float((test_probs.argmax(axis=1) == test_labels).mean()),
                lr=learning_rate(config, epoch),
            )
        )
    return metrics
