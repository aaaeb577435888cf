"""Partition of a layer's channels into disjoint competition groups."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


class GroupSpec:
    """Ordered partition of channels {0..C-1} into non-empty groups.

    Channel indices inside each group are kept sorted ascending so that
    "first index" tie-breaking rules always mean the lowest channel.

    Precomputed layout used by the activation kernels:

    * ``order``   - channel permutation making groups contiguous,
    * ``offsets`` - start of each group's segment inside ``order``,
    * ``group_of``- inverse map channel -> group id.
    """

    def __init__(self, groups):
        cleaned: list[tuple[int, ...]] = []
        for g in groups:
            members = tuple(sorted(int(i) for i in g))
            if not members:
                raise ShapeError("empty group in partition")
            cleaned.append(members)
        flat = [i for g in cleaned for i in g]
        n = len(flat)
        if n == 0:
            raise ShapeError("partition must cover at least one channel")
        if sorted(flat) != list(range(n)):
            raise ShapeError(
                f"groups must partition 0..{n - 1} exactly, got union {sorted(set(flat))}"
            )
        self.groups = cleaned
        self.n_channels = n
        self.n_groups = len(cleaned)
        self.group_of = np.empty(n, dtype=np.intp)
        for gid, members in enumerate(cleaned):
            for i in members:
                self.group_of[i] = gid
        self.order = np.fromiter((i for g in cleaned for i in g), dtype=np.intp, count=n)
        self.sizes = np.fromiter((len(g) for g in cleaned), dtype=np.intp, count=self.n_groups)
        self.offsets = np.concatenate(([0], np.cumsum(self.sizes)[:-1])).astype(np.intp)
        self.inverse_order = np.empty(n, dtype=np.intp)
        self.inverse_order[self.order] = np.arange(n, dtype=np.intp)

    @classmethod
    def from_sizes(cls, sizes) -> "GroupSpec":
        """Contiguous partition: the first size channels, the next, ..."""
        sizes = [int(s) for s in sizes]
        if any(s <= 0 for s in sizes):
            raise ShapeError(f"group sizes must be positive, got {sizes}")
        bounds = np.concatenate(([0], np.cumsum(sizes)))
        return cls([range(bounds[k], bounds[k + 1]) for k in range(len(sizes))])

    def check_channels(self, n_channels: int) -> None:
        if n_channels != self.n_channels:
            raise ShapeError(
                f"channel count {n_channels} does not match partition over {self.n_channels}"
            )

    def is_contiguous(self) -> bool:
        return all(
            g[-1] - g[0] + 1 == len(g) and (not i or g[0] == self.groups[i - 1][-1] + 1)
            for i, g in enumerate(self.groups)
        )

    def serialize(self) -> str:
        """Config-file form: ``sizes: s1 s2 ...`` when contiguous, otherwise
        explicit ``indices: i,j,k ; l,m ; ...`` with groups separated by ';'."""
        if self.is_contiguous():
            return "sizes: " + " ".join(str(s) for s in self.sizes)
        body = " ; ".join(",".join(str(i) for i in g) for g in self.groups)
        return "indices: " + body

    @classmethod
    def deserialize(cls, text: str) -> "GroupSpec":
        text = text.strip()
        if text.startswith("sizes:"):
            return cls.from_sizes(text[len("sizes:"):].split())
        if text.startswith("indices:"):
            body = text[len("indices:"):]
            return cls([part.split(",") for part in body.split(";") if part.strip()])
        raise ShapeError(f"unrecognized group spec {text!r}")

    def __eq__(self, other) -> bool:
        return isinstance(other, GroupSpec) and self.groups == other.groups

    def __repr__(self) -> str:
        return f"GroupSpec({[list(g) for g in self.groups]})"
