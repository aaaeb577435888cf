"""Grouped softmax with a ground state, and per-group maxout.

For each competition group g and pre-activations z, the activation emits

    p_i = exp(z_i / T) / (1 + sum_{k in g} exp(z_k / T)),   i in g.

The constant 1 in the denominator is the ground state: the configuration
in which no unit of the group is active.  It keeps its weight exp(0) = 1
at every temperature; T rescales only the learned logits, sharpening
(T < 1) or softening (T > 1) the within-group competition.  Outputs are
posterior activation probabilities, so each group's outputs sum to less
than 1 and the remainder is the ground-state probability.

Numerical stabilization subtracts m = max(0, max_k z_k / T) from every
group logit *and* from the ground state's zero logit, which changes no
ratio and keeps every exponent <= 0.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, StateError
from .groups import GroupSpec
from .tensor import require_finite

__all__ = [
    "gsmax_forward",
    "gsmax_backward",
    "ground_state_prob",
    "group_maxout_forward",
    "group_maxout_backward",
]


def _check_batch_matrix(z: np.ndarray, spec: GroupSpec) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"expected (batch, channels), got shape {z.shape}")
    spec.check_channels(z.shape[1])
    return z


def _stabilized_exp(z: np.ndarray, spec: GroupSpec, temperature: float):
    """Shared kernel: per-group exp table and denominator.

    Returns (scaled exp values in group-permuted layout, per-group
    denominator, exp of the shifted ground-state logit), all float64.
    Each group's numbers depend only on its own channels, so perturbing
    one group can never move another group's outputs by even one bit.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    zp = z[:, spec.order] / temperature
    seg_max = np.maximum.reduceat(zp, spec.offsets, axis=1)
    shift = np.maximum(seg_max, 0.0)
    shift_wide = np.repeat(shift, spec.sizes, axis=1)
    expz = np.exp(zp - shift_wide)
    ground = np.exp(-shift)
    denom = np.add.reduceat(expz, spec.offsets, axis=1) + ground
    return expz, denom, ground


def gsmax_forward(z: np.ndarray, spec: GroupSpec, temperature: float = 1.0) -> np.ndarray:
    """Posterior activation probabilities, shape (batch, channels)."""
    z = _check_batch_matrix(z, spec)
    require_finite(z, "pre-activations")
    expz, denom, _ = _stabilized_exp(z, spec, temperature)
    p_perm = expz / np.repeat(denom, spec.sizes, axis=1)
    return p_perm[:, spec.inverse_order]


def ground_state_prob(z: np.ndarray, spec: GroupSpec, temperature: float = 1.0) -> np.ndarray:
    """Per-group probability that no unit is active, shape (batch, n_groups)."""
    z = _check_batch_matrix(z, spec)
    require_finite(z, "pre-activations")
    _, denom, ground = _stabilized_exp(z, spec, temperature)
    return ground / denom


def gsmax_backward(
    p: np.ndarray, upstream: np.ndarray, spec: GroupSpec, temperature: float = 1.0
) -> np.ndarray:
    """Pull an upstream gradient back through the activation.

    Within a group, dp_i/dz_j = (p_i * (delta_ij - p_j)) / T; across groups
    the Jacobian is zero.  Contracting with the upstream gradient gives
    dz_j = p_j * (u_j - sum_{i in g} u_i p_i) / T.
    """
    p = _check_batch_matrix(p, spec)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != p.shape:
        raise ShapeError(f"upstream shape {upstream.shape} != outputs shape {p.shape}")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    pp = p[:, spec.order]
    up = upstream[:, spec.order]
    weighted = np.add.reduceat(up * pp, spec.offsets, axis=1)
    dz_perm = pp * (up - np.repeat(weighted, spec.sizes, axis=1)) / temperature
    return dz_perm[:, spec.inverse_order]


def group_maxout_forward(x: np.ndarray, spec: GroupSpec):
    """Per-group maximum.

    Returns (values of shape (batch, n_groups), winning channel indices of
    the same shape).  Ties go to the lowest channel index.
    """
    x = _check_batch_matrix(x, spec)
    n = x.shape[0]
    values = np.empty((n, spec.n_groups), dtype=np.float64)
    argmax = np.empty((n, spec.n_groups), dtype=np.intp)
    xp = x[:, spec.order]
    rows = np.arange(n)
    for gid in range(spec.n_groups):
        a = spec.offsets[gid]
        b = a + spec.sizes[gid]
        seg = xp[:, a:b]
        local = np.argmax(seg, axis=1)        # first max = lowest channel (sorted)
        values[:, gid] = seg[rows, local]
        argmax[:, gid] = spec.order[a + local]
    return values, argmax


def group_maxout_backward(
    upstream: np.ndarray, argmax: np.ndarray, spec: GroupSpec
) -> np.ndarray:
    """Route each group's upstream value to its winning channel."""
    upstream = np.asarray(upstream, dtype=np.float64)
    argmax = np.asarray(argmax)
    if upstream.shape != argmax.shape or upstream.ndim != 2 or upstream.shape[1] != spec.n_groups:
        raise ShapeError(
            f"upstream {upstream.shape} / argmax {argmax.shape} do not match "
            f"{spec.n_groups} groups"
        )
    if argmax.size and (argmax.min() < 0 or argmax.max() >= spec.n_channels):
        raise StateError("argmax indices do not belong to this partition")
    for gid in range(spec.n_groups):
        members = set(spec.groups[gid])
        if not all(int(i) in members for i in np.unique(argmax[:, gid])):
            raise StateError(f"stale argmax indices for group {gid}")
    out = np.zeros((upstream.shape[0], spec.n_channels), dtype=np.float64)
    rows = np.arange(upstream.shape[0])
    for gid in range(spec.n_groups):
        out[rows, argmax[:, gid]] = upstream[:, gid]
    return out
