"""Finite-difference gradient certification.

The probe loss for a layer is sum(forward(x) * u) with fixed random
weights u, so its gradient with respect to the layer output is exactly u
and both input and parameter gradients can be compared against central
differences.  Differences use step 1e-5 at float64; errors are scored as
max |analytic - numeric| / max(|analytic|_max, |numeric|_max, 1e-2), the
floor keeping near-zero gradients from inflating the ratio.
"""

from __future__ import annotations

import numpy as np

DEFAULT_STEP = 1e-5
ERROR_FLOOR = 1e-2


def numerical_gradient(f, x: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of scalar f along every entry of x.

    x is perturbed in place and restored, so f may close over the very
    array (the live parameter case) or receive it as its argument.
    """
    x = np.asarray(x)
    grad = np.zeros(x.shape, dtype=np.float64)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        saved = flat_x[i]
        flat_x[i] = saved + step
        plus = f(x)
        flat_x[i] = saved - step
        minus = f(x)
        flat_x[i] = saved
        flat_g[i] = (plus - minus) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)),
                ERROR_FLOOR)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def certify_layer(layer, x: np.ndarray, upstream: np.ndarray,
                  step: float = DEFAULT_STEP, rng=None) -> float:
    """Worst relative error over the input gradient and every parameter
    gradient of ``layer`` at the probe loss sum(forward * upstream).

    Uses train-mode forwards throughout so stochastic layers must be
    pinned (dropout via fixed_mask) before certification.
    """
    x = np.array(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)

    layer.forward(x, train=True, rng=rng)
    analytic_dx = layer.backward(upstream)
    analytic_params = {name: g.copy() for name, g in layer.gradients().items()}

    def probe(arr_ignored):
        return float((layer.forward(x, train=True, rng=rng) * upstream).sum())

    worst = max_relative_error(analytic_dx, numerical_gradient(probe, x, step))
    for name, param in layer.parameters().items():
        numeric = numerical_gradient(probe, param, step)
        worst = max(worst, max_relative_error(analytic_params[name], numeric))
    # leave no half-consumed cache behind the final probe forward
    layer._cache = None
    return worst
