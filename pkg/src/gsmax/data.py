"""Dataset generation and ingestion.

Synthetic hierarchical Gaussians give a desk-scale two-level label
problem: well separated super-class centers, moderately separated
sub-class centers around each, isotropic noise on top.  Rotated edge
patches give a tiny orbit dataset: two step-edge prototypes under the
cyclic group of quarter turns.  CIFAR binary readers ingest the public
record layouts.  All generators are pure functions of (spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import load_tensors, save_tensors
from .discovery import Hierarchy
from .errors import ConfigError, FormatError, LabelError, ShapeError
from .rng import Rng


@dataclass(frozen=True)
class HierarchicalDataset:
    """Samples with aligned (super, sub) labels under one hierarchy."""

    samples: np.ndarray
    super_labels: np.ndarray
    sub_labels: np.ndarray
    hierarchy: Hierarchy
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "super_labels", np.asarray(self.super_labels, dtype=np.int64))
        object.__setattr__(self, "sub_labels", np.asarray(self.sub_labels, dtype=np.int64))
        n = self.samples.shape[0]
        if self.super_labels.shape != (n,) or self.sub_labels.shape != (n,):
            raise ShapeError(f"labels must both have shape ({n},)")
        if n:
            if self.sub_labels.min() < 0 or self.sub_labels.max() >= self.hierarchy.n_subs:
                raise LabelError("sub-class label outside hierarchy")
            table = np.array(self.hierarchy.sub_to_super, dtype=np.int64)
            if not np.array_equal(table[self.sub_labels], self.super_labels):
                raise LabelError("(super, sub) label pair contradicts the hierarchy")

    @property
    def n(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Hierarchical Gaussian generator parameters."""

    n_supers: int
    subs_per_super: tuple
    dim: int
    super_separation: float
    sub_separation: float
    noise_sigma: float
    n_train_per_sub: int
    n_test_per_sub: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "subs_per_super", tuple(int(k) for k in self.subs_per_super))
        if self.n_supers < 1 or len(self.subs_per_super) != self.n_supers:
            raise ConfigError(f"need one sub-class count per super-class, got {self.subs_per_super}")
        if any(k < 1 for k in self.subs_per_super):
            raise ConfigError("every super-class needs at least one sub-class")
        if self.dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dim}")
        if not self.super_separation > self.sub_separation > 0:
            raise ConfigError(
                f"need super_separation > sub_separation > 0, got "
                f"{self.super_separation} and {self.sub_separation}"
            )
        if self.noise_sigma <= 0:
            raise ConfigError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if self.n_train_per_sub < 1 or self.n_test_per_sub < 0:
            raise ConfigError("per-sub sample counts must be positive (test may be 0)")

    def hierarchy(self, neuron_groups=None) -> Hierarchy:
        sub_to_super = [s for s, k in enumerate(self.subs_per_super) for _ in range(k)]
        return Hierarchy(self.n_supers, tuple(sub_to_super), neuron_groups)


def _unit_direction(rng: Rng, dim: int) -> np.ndarray:
    while True:
        v = rng.normal_array(dim)
        norm = float(np.linalg.norm(v))
        if norm > 1e-12:
            return v / norm


def synthetic_centers(spec: SyntheticSpec):
    """(super_centers, sub_centers): super centers uniform on the sphere of
    radius super_separation, each sub center displaced from its super
    center by a uniform direction of length sub_separation.

    This consumes the leading portion of Rng(spec.seed) exactly as
    gen_hierarchical_gaussians does, so the returned centers are the true
    centers of the generated data."""
    rng = Rng(spec.seed)
    super_centers = np.stack(
        [_unit_direction(rng, spec.dim) * spec.super_separation for _ in range(spec.n_supers)]
    )
    sub_centers = []
    for s in range(spec.n_supers):
        for _ in range(spec.subs_per_super[s]):
            sub_centers.append(super_centers[s] + _unit_direction(rng, spec.dim) * spec.sub_separation)
    return super_centers, np.stack(sub_centers)


def gen_hierarchical_gaussians(spec: SyntheticSpec):
    """(train, test) datasets; both splits are i.i.d. around the same centers."""
    rng = Rng(spec.seed)
    n_subs = sum(spec.subs_per_super)
    # identical draw order to synthetic_centers
    super_centers = np.stack(
        [_unit_direction(rng, spec.dim) * spec.super_separation for _ in range(spec.n_supers)]
    )
    sub_centers = []
    sub_to_super = []
    for s in range(spec.n_supers):
        for _ in range(spec.subs_per_super[s]):
            sub_centers.append(super_centers[s] + _unit_direction(rng, spec.dim) * spec.sub_separation)
            sub_to_super.append(s)
    hierarchy = Hierarchy(spec.n_supers, tuple(sub_to_super))

    def draw(split, n_per_sub):
        samples = np.empty((n_per_sub * n_subs, spec.dim), dtype=np.float64)
        subs = np.empty(n_per_sub * n_subs, dtype=np.int64)
        row = 0
        for k in range(n_subs):
            for _ in range(n_per_sub):
                samples[row] = sub_centers[k] + spec.noise_sigma * rng.normal_array(spec.dim)
                subs[row] = k
                row += 1
        supers = np.array([sub_to_super[k] for k in subs], dtype=np.int64)
        return HierarchicalDataset(samples, supers, subs, hierarchy, split)

    return draw("train", spec.n_train_per_sub), draw("test", spec.n_test_per_sub)


def rotate_patch90(patch: np.ndarray, r: int) -> np.ndarray:
    """Exact counterclockwise rotation by r quarter turns (r mod 4)."""
    patch = np.asarray(patch)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ShapeError(f"expected a square patch, got shape {patch.shape}")
    return np.ascontiguousarray(np.rot90(patch, int(r) % 4))


def edge_prototypes(patch_size: int):
    """Two oriented step edges on a patch_size x patch_size grid: a
    vertical half-plane step and a diagonal step."""
    if patch_size < 3:
        raise ConfigError(f"patch_size must be >= 3, got {patch_size}")
    vertical = np.where(np.arange(patch_size)[None, :] < patch_size // 2, -1.0, 1.0)
    vertical = np.broadcast_to(vertical, (patch_size, patch_size)).astype(np.float64)
    rows = np.arange(patch_size)[:, None]
    cols = np.arange(patch_size)[None, :]
    diagonal = np.sign(cols - rows).astype(np.float64)
    return [np.ascontiguousarray(vertical), diagonal]


def gen_rotated_edges(n_per_orbit: int, patch_size: int, noise_sigma: float, seed: int,
                      split: str = "train") -> HierarchicalDataset:
    """All four quarter-turn rotations of each edge prototype, plus noise.

    Labels: super-class = prototype (orbit) id, sub-class = prototype * 4
    + rotation count, so every orbit contributes four sub-classes.
    Samples are flattened patches of length patch_size**2.
    """
    if n_per_orbit < 1:
        raise ConfigError(f"n_per_orbit must be >= 1, got {n_per_orbit}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    prototypes = edge_prototypes(patch_size)
    rng = Rng(seed)
    samples, supers, subs = [], [], []
    for proto_id, proto in enumerate(prototypes):
        for r in range(4):
            rotated = rotate_patch90(proto, r)
            for _ in range(n_per_orbit):
                noisy = rotated + noise_sigma * rng.normal_array((patch_size, patch_size))
                samples.append(noisy.reshape(-1))
                supers.append(proto_id)
                subs.append(proto_id * 4 + r)
    sub_to_super = tuple(p for p in range(len(prototypes)) for _ in range(4))
    hierarchy = Hierarchy(len(prototypes), sub_to_super)
    return HierarchicalDataset(np.stack(samples), supers, subs, hierarchy, split)


@dataclass(frozen=True)
class RotatedEdgesSpec:
    """Train/test recipe for the rotated-edge dataset; the test split
    draws from an independent stream at seed + 1."""

    n_train_per_orbit: int
    n_test_per_orbit: int
    patch_size: int
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.n_train_per_orbit < 1 or self.n_test_per_orbit < 1:
            raise ConfigError("per-orbit sample counts must be >= 1")


def gen_rotated_edge_sets(spec: RotatedEdgesSpec):
    """(train, test) datasets for a RotatedEdgesSpec."""
    train = gen_rotated_edges(spec.n_train_per_orbit, spec.patch_size,
                              spec.noise_sigma, spec.seed, split="train")
    test = gen_rotated_edges(spec.n_test_per_orbit, spec.patch_size,
                             spec.noise_sigma, spec.seed + 1, split="test")
    return train, test


def gcn(image: np.ndarray, epsilon: float = 1e-8) -> np.ndarray:
    """Global contrast normalization of one image: subtract its mean,
    divide by max(standard deviation, epsilon)."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    image = np.asarray(image, dtype=np.float64)
    centered = image - image.mean()
    return centered / max(float(centered.std()), epsilon)


_CIFAR_VARIANTS = {
    "cifar10": {"record": 1 + 3072, "label_bytes": 1, "n_classes": (10,)},
    "cifar100": {"record": 2 + 3072, "label_bytes": 2, "n_classes": (20, 100)},
}


def read_cifar_binary(path, variant: str) -> HierarchicalDataset:
    """Decode a CIFAR binary file into a hierarchical dataset.

    cifar10 records are [label, 3072 pixels]; the hierarchy is flat (one
    super-class over ten sub-classes).  cifar100 records are [coarse,
    fine, 3072 pixels]; super = coarse, sub = fine.  Pixels are stored
    channel-major (R, G, B planes of 32x32, row-major) and scaled to
    [0, 1].  The file must use every super and sub label it implies and
    map each fine label to a single coarse label, otherwise it cannot
    define a valid hierarchy and is rejected as malformed.
    """
    if variant not in _CIFAR_VARIANTS:
        raise ValueError(f"variant must be one of {sorted(_CIFAR_VARIANTS)}, got {variant!r}")
    layout = _CIFAR_VARIANTS[variant]
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % layout["record"] != 0:
        raise FormatError(
            f"{path}: size {raw.size} is not a positive multiple of record size {layout['record']}"
        )
    records = raw.reshape(-1, layout["record"])
    pixels = records[:, layout["label_bytes"]:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0

    if variant == "cifar10":
        labels = records[:, 0].astype(np.int64)
        if labels.max() >= 10:
            raise FormatError(f"{path}: cifar10 label {labels.max()} out of range")
        observed = np.unique(labels)
        n_subs = int(labels.max()) + 1
        if observed.size != n_subs:
            raise FormatError(f"{path}: sub-class labels 0..{n_subs - 1} are not all present")
        hierarchy = Hierarchy(1, tuple([0] * n_subs))
        supers = np.zeros(labels.size, dtype=np.int64)
        return HierarchicalDataset(pixels, supers, labels, hierarchy)

    coarse = records[:, 0].astype(np.int64)
    fine = records[:, 1].astype(np.int64)
    if coarse.max() >= 20:
        raise FormatError(f"{path}: coarse label {coarse.max()} out of range")
    if fine.max() >= 100:
        raise FormatError(f"{path}: fine label {fine.max()} out of range")
    n_supers = int(coarse.max()) + 1
    n_subs = int(fine.max()) + 1
    sub_to_super = np.full(n_subs, -1, dtype=np.int64)
    for c, f in zip(coarse, fine):
        if sub_to_super[f] == -1:
            sub_to_super[f] = c
        elif sub_to_super[f] != c:
            raise FormatError(f"{path}: fine label {f} maps to two coarse labels")
    if (sub_to_super == -1).any() or len(np.unique(coarse)) != n_supers:
        raise FormatError(f"{path}: labels do not cover a complete hierarchy")
    hierarchy = Hierarchy(n_supers, tuple(int(s) for s in sub_to_super))
    return HierarchicalDataset(pixels, coarse, fine, hierarchy)


def augment(image: np.ndarray, max_shift: int, rng: Rng) -> np.ndarray:
    """Random horizontal flip (p = 1/2), then a random translation drawn
    uniformly from [-max_shift, max_shift]^2 with zero padding."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ShapeError(f"expected (C, H, W), got shape {image.shape}")
    c, h, w = image.shape
    if not 0 <= max_shift < min(h, w):
        raise ConfigError(f"max_shift {max_shift} does not fit {h}x{w} images")
    out = image
    if rng.uniform() < 0.5:
        out = out[:, :, ::-1]
    di = rng.integer(2 * max_shift + 1) - max_shift
    dj = rng.integer(2 * max_shift + 1) - max_shift
    if di == 0 and dj == 0:
        return np.ascontiguousarray(out)
    shifted = np.zeros_like(image)
    src_i = slice(max(-di, 0), h - max(di, 0))
    dst_i = slice(max(di, 0), h - max(-di, 0))
    src_j = slice(max(-dj, 0), w - max(dj, 0))
    dst_j = slice(max(dj, 0), w - max(-dj, 0))
    shifted[:, dst_i, dst_j] = out[:, src_i, src_j]
    return shifted


def save_dataset(path, dataset: HierarchicalDataset) -> None:
    """Dump samples and labels in the tensor container plus a text
    sidecar ``<path>.hier`` describing the hierarchy (super count, then
    per-super sub counts, then the sub_to_super list)."""
    save_tensors(path, {
        "samples": dataset.samples,
        "super_labels": dataset.super_labels.astype(np.float64),
        "sub_labels": dataset.sub_labels.astype(np.float64),
    })
    h = dataset.hierarchy
    counts = [len(h.subs_of(s)) for s in range(h.n_supers)]
    with open(f"{path}.hier", "w", encoding="ascii") as f:
        f.write(f"{h.n_supers}\n")
        f.write(" ".join(str(k) for k in counts) + "\n")
        f.write(" ".join(str(s) for s in h.sub_to_super) + "\n")


def load_dataset(path, split: str = "train") -> HierarchicalDataset:
    tensors = load_tensors(path)
    try:
        samples = tensors["samples"]
        supers = tensors["super_labels"].astype(np.int64)
        subs = tensors["sub_labels"].astype(np.int64)
    except KeyError as exc:
        raise FormatError(f"{path}: missing tensor {exc}") from exc
    with open(f"{path}.hier", "r", encoding="ascii") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    try:
        n_supers = int(lines[0])
        counts = [int(t) for t in lines[1].split()]
        sub_to_super = tuple(int(t) for t in lines[2].split())
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}.hier: malformed hierarchy sidecar: {exc}") from exc
    try:
        hierarchy = Hierarchy(n_supers, sub_to_super)
    except Exception as exc:
        raise FormatError(f"{path}.hier: invalid hierarchy: {exc}") from exc
    if [len(hierarchy.subs_of(s)) for s in range(n_supers)] != counts:
        raise FormatError(f"{path}.hier: per-super sub counts disagree with the mapping")
    return HierarchicalDataset(samples, supers, subs, hierarchy, split)
