"""Randomized certification suites for the activation and its gradients.

Two families of checks back the numerical claims of the package:

* enumeration: random machines with the hard competition penalty, where
  the exact posterior from state enumeration must match the closed-form
  activation to near machine precision;
* gradients: finite-difference certification of every registered layer
  kind, with instances resampled away from decision-boundary kinks where
  one-sided derivatives would poison the comparison.

Both are exposed to the command line through ``run_all``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .activation import ground_state_prob, gsmax_forward
from .boltzmann import NEG_INFINITY, BoltzmannMachine, enumerate_posterior
from .errors import NumericError
from .gradcheck import DEFAULT_STEP, certify_layer, max_relative_error, numerical_gradient
from .groups import GroupSpec
from .layers import (
    LAYER_KINDS,
    Conv2d,
    Dense,
    Dropout,
    GroupMaxout,
    Gsmax,
    Identity,
    MaxPool2d,
    Relu,
    SoftmaxXentHead,
)
from .rng import Rng

ENUMERATION_TOLERANCE = 1e-12
GRADIENT_TOLERANCE = 1e-6
KINK_MARGIN = 1e-4
RESAMPLE_LIMIT = 100


@dataclass(frozen=True)
class CheckResult:
    name: str
    kind: str
    trials: int
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.max_deviation) and self.max_deviation < self.tolerance

    def line(self) -> str:
        flag = "ok  " if self.passed else "FAIL"
        return (f"{flag} {self.name}: max deviation {self.max_deviation:.3e} "
                f"(tolerance {self.tolerance:.0e}, {self.trials} trials)")


@dataclass(frozen=True)
class OracleReport:
    results: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def format(self) -> str:
        lines = [r.line() for r in self.results]
        n_bad = sum(not r.passed for r in self.results)
        lines.append("all checks passed" if n_bad == 0
                     else f"{n_bad} of {len(self.results)} checks FAILED")
        return "\n".join(lines)


def random_partition(rng: Rng, n_channels: int, max_group: int = 4) -> GroupSpec:
    """Draw a partition of n_channels into groups of size 1..max_group."""
    sizes = []
    left = n_channels
    while left > 0:
        take = min(left, 1 + rng.integer(max_group))
        sizes.append(take)
        left -= take
    return GroupSpec.from_sizes(sizes)


def run_enumeration_check(trials: int, seed: int, forward=gsmax_forward) -> CheckResult:
    """Exact-posterior agreement on random hard-penalty machines.

    ``forward`` is injectable so the suite's own sensitivity can be
    demonstrated against a deliberately broken activation.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = Rng(seed)
    worst = 0.0
    for _ in range(trials):
        n_hidden = 2 + rng.integer(11)          # 2..12
        n_visible = 1 + rng.integer(6)
        spec = random_partition(rng, n_hidden, max_group=4)
        machine = BoltzmannMachine(
            hidden_bias=rng.uniform_array((n_hidden,), -2.0, 2.0),
            visible_bias=rng.uniform_array((n_visible,), -2.0, 2.0),
            weights=rng.uniform_array((n_visible, n_hidden), -2.0, 2.0),
            groups=spec,
            penalty=NEG_INFINITY,
        )
        visible = (rng.uniform_array((n_visible,)) < 0.5).astype(np.float64)
        posterior = enumerate_posterior(machine, visible)
        z = machine.hidden_inputs(visible)[None, :]
        p = forward(z, spec, 1.0)[0]
        worst = max(worst, float(np.max(np.abs(p - posterior.unit_marginals))))
        ground = ground_state_prob(z, spec, 1.0)[0]
        for gid in range(spec.n_groups):
            worst = max(worst, abs(float(ground[gid]) - float(posterior.group_tables[gid][0])))
    return CheckResult("enumeration vs activation", "enumeration",
                       trials, worst, ENUMERATION_TOLERANCE)


def _draw(rng: Rng, maker, accept=None):
    for _ in range(RESAMPLE_LIMIT):
        instance = maker(rng)
        if accept is None or accept(*instance):
            return instance
    raise NumericError("could not draw a kink-free instance within the resample limit")


def _upstream(rng: Rng, shape) -> np.ndarray:
    return rng.uniform_array(shape, -1.0, 1.0)


def _dense_trial(rng: Rng) -> float:
    layer = Dense(7, 5, rng)
    x = rng.uniform_array((4, 7), -1.0, 1.0)
    return certify_layer(layer, x, _upstream(rng, (4, 5)))


def _identity_trial(rng: Rng) -> float:
    layer = Identity()
    x = rng.uniform_array((3, 6), -1.0, 1.0)
    return certify_layer(layer, x, _upstream(rng, (3, 6)))


def _conv_trial(rng: Rng) -> float:
    stride = 1 + rng.integer(2)
    padding = ("valid", "same")[rng.integer(2)]
    layer = Conv2d(3, 4, 3, rng, stride=stride, padding=padding)
    x = rng.uniform_array((2, 3, 6, 6), -1.0, 1.0)
    oh, ow = layer.out_shape((3, 6, 6))[1:]
    return certify_layer(layer, x, _upstream(rng, (2, 4, oh, ow)))


def _pool_windows_separated(x: np.ndarray, kernel: int, stride: int) -> bool:
    n, c, h, w = x.shape
    for r in range(0, (h - kernel) // stride + 1):
        for q in range(0, (w - kernel) // stride + 1):
            win = x[:, :, r * stride:r * stride + kernel,
                    q * stride:q * stride + kernel].reshape(n, c, -1)
            top2 = np.sort(win, axis=2)[:, :, -2:]
            if np.min(top2[:, :, 1] - top2[:, :, 0]) < KINK_MARGIN:
                return False
    return True


def _maxpool_trial(rng: Rng) -> float:
    layer = MaxPool2d(2, 2)

    def maker(r):
        return (r.uniform_array((2, 3, 6, 6), -1.0, 1.0),)

    (x,) = _draw(rng, maker, lambda x: _pool_windows_separated(x, 2, 2))
    return certify_layer(layer, x, _upstream(rng, (2, 3, 3, 3)))


def _relu_trial(rng: Rng) -> float:
    layer = Relu()

    def maker(r):
        return (r.uniform_array((4, 9), -1.0, 1.0),)

    (x,) = _draw(rng, maker, lambda x: float(np.min(np.abs(x))) >= KINK_MARGIN)
    return certify_layer(layer, x, _upstream(rng, (4, 9)))


def _dropout_trial(rng: Rng) -> float:
    keep = 0.6
    mask = (rng.uniform_array((5, 8)) < keep).astype(np.float64)
    layer = Dropout(keep, fixed_mask=mask)
    x = rng.uniform_array((5, 8), -1.0, 1.0)
    return certify_layer(layer, x, _upstream(rng, (5, 8)))


def _gsmax_trial(temperature: float):
    def trial(rng: Rng) -> float:
        spec = random_partition(rng, 12, max_group=4)
        layer = Gsmax(spec, temperature=temperature)
        x = rng.uniform_array((5, 12), -2.0, 2.0)
        return certify_layer(layer, x, _upstream(rng, (5, 12)))

    return trial


def _groups_separated(x: np.ndarray, spec: GroupSpec) -> bool:
    for members in spec.groups:
        if len(members) < 2:
            continue
        block = np.sort(x[:, list(members)], axis=1)
        if np.min(block[:, -1] - block[:, -2]) < KINK_MARGIN:
            return False
    return True


def _maxout_trial(rng: Rng) -> float:
    spec = random_partition(rng, 12, max_group=4)

    def maker(r):
        return (r.uniform_array((5, 12), -1.0, 1.0),)

    (x,) = _draw(rng, maker, lambda x: _groups_separated(x, spec))
    layer = GroupMaxout(spec)
    return certify_layer(layer, x, _upstream(rng, (5, spec.n_groups)))


def _head_trial(rng: Rng) -> float:
    n, classes = 6, 5
    x = rng.uniform_array((n, classes), -2.0, 2.0)
    labels = np.array([rng.integer(classes) for _ in range(n)], dtype=np.int64)
    head = SoftmaxXentHead()
    head.forward(x, train=True)
    _, analytic = head.loss(labels)

    def f(z):
        head.forward(z, train=True)
        value, _ = head.loss(labels)
        return value

    numeric = numerical_gradient(f, x, DEFAULT_STEP)
    return max_relative_error(analytic, numeric)


def gradient_suite():
    """(name, layer kind, single-instance runner) for every registered kind."""
    return [
        ("dense", "dense", _dense_trial),
        ("conv2d", "conv2d", _conv_trial),
        ("maxpool2d", "maxpool2d", _maxpool_trial),
        ("relu", "relu", _relu_trial),
        ("dropout (fixed mask)", "dropout", _dropout_trial),
        ("gsmax [T=0.5]", "gsmax", _gsmax_trial(0.5)),
        ("gsmax [T=1]", "gsmax", _gsmax_trial(1.0)),
        ("gsmax [T=2]", "gsmax", _gsmax_trial(2.0)),
        ("group_maxout", "group_maxout", _maxout_trial),
        ("softmax_xent_head", "softmax_xent_head", _head_trial),
        ("identity", "identity", _identity_trial),
    ]


def checked_kinds() -> frozenset:
    return frozenset(kind for _, kind, _ in gradient_suite())


def run_gradient_checks(instances: int, seed: int):
    """One CheckResult per suite entry, each the worst error over
    ``instances`` independently drawn instances."""
    if instances < 1:
        raise ValueError(f"instances must be >= 1, got {instances}")
    results = []
    for offset, (name, kind, trial) in enumerate(gradient_suite()):
        rng = Rng(seed + 1000 * (offset + 1))
        worst = max(trial(rng) for _ in range(instances))
        results.append(CheckResult(f"gradient: {name}", kind, instances,
                                   worst, GRADIENT_TOLERANCE))
    return results


def run_all(trials: int = 100, instances: int = 20, seed: int = 0) -> OracleReport:
    results = [run_enumeration_check(trials, seed)]
    results.extend(run_gradient_checks(instances, seed))
    return OracleReport(tuple(results))
