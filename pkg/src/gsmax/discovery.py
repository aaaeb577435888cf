"""Sub-class concept discovery from super-class supervision.

The protocol: train with coarse labels only, align each penultimate
channel group with one super-class, then for every sample find the most
active neuron inside its super-class's group and credit that neuron with
the sample's (hidden) sub-class label.  A neuron's discovered concept is
the modal label of its credit list; accuracy of those discovered
concepts on fresh activations is compared against the chance level of
within-group guessing.

All tie-breaking is deterministic: activation argmax ties go to the
lowest channel, vote-mode ties to the lowest sub-class id.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import LabelError, NumericError, ShapeError, StateError
from .groups import GroupSpec

UNASSIGNED = -1


@dataclass(frozen=True)
class Hierarchy:
    """Two-level label structure plus the neuron-group alignment.

    ``sub_to_super[k]`` is the super-class of sub-class k.  When
    ``neuron_groups`` is set it must have exactly one group per
    super-class; group g hosts the neurons competing for super-class g.
    """

    n_supers: int
    sub_to_super: tuple
    neuron_groups: GroupSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "sub_to_super", tuple(int(s) for s in self.sub_to_super))
        if self.n_supers < 1:
            raise LabelError(f"need at least one super-class, got {self.n_supers}")
        if not self.sub_to_super:
            raise LabelError("need at least one sub-class")
        seen = set()
        for k, s in enumerate(self.sub_to_super):
            if not 0 <= s < self.n_supers:
                raise LabelError(f"sub-class {k} maps to invalid super-class {s}")
            seen.add(s)
        if seen != set(range(self.n_supers)):
            raise LabelError(f"super-classes without sub-classes: {sorted(set(range(self.n_supers)) - seen)}")
        if self.neuron_groups is not None and self.neuron_groups.n_groups != self.n_supers:
            raise ShapeError(
                f"{self.neuron_groups.n_groups} neuron groups for {self.n_supers} super-classes"
            )

    @property
    def n_subs(self) -> int:
        return len(self.sub_to_super)

    def subs_of(self, super_id: int) -> tuple:
        return tuple(k for k, s in enumerate(self.sub_to_super) if s == super_id)

    def require_groups(self) -> GroupSpec:
        if self.neuron_groups is None:
            raise StateError("hierarchy has no neuron-group alignment")
        return self.neuron_groups


def chance_level(h: Hierarchy) -> float:
    """Mean over super-classes of 1 / (number of sub-classes).

    Accumulated with exact (fsum) summation so uniform hierarchies hit
    the reciprocal exactly: 20 supers x 5 subs -> 0.2, not 0.2 + ulps.
    """
    counts = [len(h.subs_of(s)) for s in range(h.n_supers)]
    return math.fsum(1.0 / c for c in counts) / h.n_supers


def _check_labels(h: Hierarchy, super_labels, sub_labels, n):
    super_labels = np.asarray(super_labels)
    sub_labels = np.asarray(sub_labels)
    if super_labels.shape != (n,) or sub_labels.shape != (n,):
        raise ShapeError(f"labels must both have shape ({n},)")
    super_labels = super_labels.astype(np.intp)
    sub_labels = sub_labels.astype(np.intp)
    if n:
        if super_labels.min() < 0 or super_labels.max() >= h.n_supers:
            raise LabelError("super-class label outside hierarchy")
        if sub_labels.min() < 0 or sub_labels.max() >= h.n_subs:
            raise LabelError("sub-class label outside hierarchy")
        table = np.array(h.sub_to_super, dtype=np.intp)
        if not np.array_equal(table[sub_labels], super_labels):
            raise LabelError("(super, sub) label pair contradicts the hierarchy")
    return super_labels, sub_labels


def _winning_neurons(activations, super_labels, h: Hierarchy):
    """Per sample: the most active channel inside its super-class group."""
    groups = h.require_groups()
    activations = np.asarray(activations, dtype=np.float64)
    if activations.ndim != 2:
        raise ShapeError(f"expected (samples, channels) activations, got {activations.shape}")
    groups.check_channels(activations.shape[1])
    winners = np.empty(activations.shape[0], dtype=np.intp)
    for s in range(h.n_supers):
        members = np.array(groups.groups[s], dtype=np.intp)
        rows = np.flatnonzero(super_labels == s)
        if rows.size == 0:
            continue
        local = np.argmax(activations[np.ix_(rows, members)], axis=1)  # first max
        winners[rows] = members[local]
    return winners


@dataclass
class AssociationTable:
    """Vote counts per (neuron, sub-class) and the finalized assignment.

    ``assigned[c]`` is the modal sub-class of neuron c's votes, or
    UNASSIGNED when the neuron never won a sample.
    """

    vote_counts: np.ndarray          # (channels, n_subs) int64
    assigned: np.ndarray | None      # (channels,) int64, or None before finalize
    n_samples: int

    def finalized(self) -> "AssociationTable":
        if self.assigned is None:
            raise StateError("association table was never finalized")
        return self

    def modal_vote_total(self) -> int:
        """Sum over neurons of the count of their modal sub-class."""
        return int(self.vote_counts.max(axis=1, initial=0).sum())


def associate_neurons(activations, super_labels, sub_labels, h: Hierarchy) -> AssociationTable:
    """Accumulate sub-class votes on within-group argmax neurons and
    finalize assignments by per-neuron vote mode."""
    groups = h.require_groups()
    activations = np.asarray(activations, dtype=np.float64)
    n = activations.shape[0]
    super_labels, sub_labels = _check_labels(h, super_labels, sub_labels, n)
    winners = _winning_neurons(activations, super_labels, h)

    counts = np.zeros((groups.n_channels, h.n_subs), dtype=np.int64)
    np.add.at(counts, (winners, sub_labels), 1)

    assigned = np.full(groups.n_channels, UNASSIGNED, dtype=np.int64)
    voted = counts.sum(axis=1) > 0
    assigned[voted] = counts[voted].argmax(axis=1)      # tie -> lowest sub id
    return AssociationTable(vote_counts=counts, assigned=assigned, n_samples=n)


def classify_subclass(activation_row, super_label: int, table: AssociationTable, h: Hierarchy) -> int:
    """Predicted sub-class for one sample: the assigned label of the most
    active neuron in the sample's super-class group (UNASSIGNED when that
    neuron has none; callers count it as wrong)."""
    table = table.finalized()
    groups = h.require_groups()
    row = np.asarray(activation_row, dtype=np.float64)
    if row.shape != (groups.n_channels,):
        raise ShapeError(f"activation row shape {row.shape} != ({groups.n_channels},)")
    if not 0 <= int(super_label) < h.n_supers:
        raise LabelError(f"super-class label {super_label} outside hierarchy")
    members = groups.groups[int(super_label)]
    winner = members[int(np.argmax(row[list(members)]))]
    return int(table.assigned[winner])


def classify_batch(activations, super_labels, table: AssociationTable, h: Hierarchy) -> np.ndarray:
    table = table.finalized()
    activations = np.asarray(activations, dtype=np.float64)
    super_labels = np.asarray(super_labels).astype(np.intp)
    if super_labels.shape != (activations.shape[0],):
        raise ShapeError("super labels must align with activations")
    if super_labels.size and (super_labels.min() < 0 or super_labels.max() >= h.n_supers):
        raise LabelError("super-class label outside hierarchy")
    winners = _winning_neurons(activations, super_labels, h)
    return table.assigned[winners]


def subclass_accuracy(activations, super_labels, sub_labels, table: AssociationTable, h: Hierarchy) -> float:
    """Fraction of samples whose predicted sub-class is the true one."""
    activations = np.asarray(activations, dtype=np.float64)
    n = activations.shape[0]
    super_labels, sub_labels = _check_labels(h, super_labels, sub_labels, n)
    predictions = classify_batch(activations, super_labels, table, h)
    return float((predictions == sub_labels).mean())


@dataclass(frozen=True)
class SimilarityReport:
    """Mean absolute cosine similarity of flattened filters, split into
    same-group and different-group pairs."""

    within_mean: float
    across_mean: float
    per_group: tuple            # one mean per group; nan for singleton groups
    n_within_pairs: int
    n_across_pairs: int


def group_similarity_report(filters, spec: GroupSpec) -> SimilarityReport:
    filters = np.asarray(filters, dtype=np.float64)
    if filters.ndim != 2:
        raise ShapeError(f"expected (filters, fan_in), got shape {filters.shape}")
    spec.check_channels(filters.shape[0])
    if spec.n_groups < 2:
        raise ShapeError("similarity split needs at least two groups")
    norms = np.linalg.norm(filters, axis=1)
    if np.any(norms == 0.0):
        raise NumericError("zero-norm filter has no direction to compare")
    unit = filters / norms[:, None]
    cos = np.abs(unit @ unit.T)

    same = spec.group_of[:, None] == spec.group_of[None, :]
    upper = np.triu(np.ones_like(cos, dtype=bool), k=1)   # each unordered pair once
    within_mask = same & upper
    across_mask = ~same & upper

    per_group = []
    for members in spec.groups:
        idx = np.array(members, dtype=np.intp)
        block_mask = upper[np.ix_(idx, idx)]
        block = cos[np.ix_(idx, idx)]
        per_group.append(float(block[block_mask].mean()) if block_mask.any() else float("nan"))

    def masked_mean(mask):
        return float(cos[mask].mean()) if mask.any() else float("nan")

    return SimilarityReport(
        within_mean=masked_mean(within_mask),
        across_mean=masked_mean(across_mask),
        per_group=tuple(per_group),
        n_within_pairs=int(within_mask.sum()),
        n_across_pairs=int(across_mask.sum()),
    )


def write_association_csv(path, table: AssociationTable, h: Hierarchy) -> None:
    """One row per neuron: id, group, assigned sub-class (empty when
    unassigned), and the vote histogram as ``sub:count`` pairs."""
    table = table.finalized()
    groups = h.require_groups()
    with open(path, "w", newline="", encoding="ascii") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["neuron", "group", "assigned_sub", "votes"])
        for c in range(groups.n_channels):
            votes = ";".join(
                f"{k}:{table.vote_counts[c, k]}"
                for k in np.flatnonzero(table.vote_counts[c])
            )
            assigned = "" if table.assigned[c] == UNASSIGNED else str(int(table.assigned[c]))
            writer.writerow([c, int(groups.group_of[c]), assigned, votes])


def write_summary_json(path, accuracy: float, chance: float, control_delta: float | None = None, **extra) -> None:
    """Single-line JSON summary of a discovery run."""
    payload = {"accuracy": accuracy, "chance": chance}
    if control_delta is not None:
        payload["control_delta"] = control_delta
    payload.update(extra)
    with open(path, "w", encoding="ascii") as f:
        f.write(json.dumps(payload) + "\n")
