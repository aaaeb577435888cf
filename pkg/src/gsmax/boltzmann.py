"""Ground-truth machinery: a Boltzmann machine whose hidden units compete
within groups, exact posteriors by enumeration, and a Gibbs sampler.

The machine over binary hidden units h and visible units v has joint
weight exp(bias_h . h + bias_v . v + v' W h + h' H h) where H couples
only hidden units of the same group: H[i][j] = penalty for i != j in one
group, 0 otherwise, symmetric with zero diagonal.  Because h' H h sums
over ordered pairs, one co-active pair costs 2 * penalty; the factor 2
correspondingly appears in the Gibbs conditional.

``NEG_INFINITY`` is a symbolic sentinel, never the float -inf, so the
forbidden configurations are excluded structurally and 0 * inf can never
poison a computation.  With the symbolic penalty each group's posterior
is supported on its one-hot states plus the all-off ground state.

Per-group posterior tables are laid out as

    [ground, one unit active (in ascending channel order) ..., invalid]

where "invalid" aggregates every state with two or more active units in
the group.  The symbolic penalty puts exactly zero mass there; finite
penalties leave a residue, and the Gibbs sampler can visit such states,
so keeping the bucket makes all three tables directly comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, SizeError
from .groups import GroupSpec
from .rng import Rng


class _NegInfinity:
    """Symbolic minus infinity for the within-group penalty."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NEG_INFINITY"


NEG_INFINITY = _NegInfinity()

ENUMERATION_LIMIT = 20   # 2**20 joint states; keeps exact runs under a second
_CHUNK_BITS = 16


@dataclass
class BoltzmannMachine:
    """Biases and interactions; the hidden-hidden matrix is implied by
    (groups, penalty) and materialized on demand."""

    hidden_bias: np.ndarray        # (H,)
    visible_bias: np.ndarray       # (V,)
    weights: np.ndarray            # (V, H) visible-to-hidden
    groups: GroupSpec              # over hidden units
    penalty: object = NEG_INFINITY  # float <= 0, or NEG_INFINITY

    def __post_init__(self):
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        self.visible_bias = np.asarray(self.visible_bias, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.hidden_bias.ndim != 1 or self.visible_bias.ndim != 1 or self.weights.ndim != 2:
            raise ShapeError("hidden_bias, visible_bias must be vectors and weights a matrix")
        if self.weights.shape != (self.visible_bias.size, self.hidden_bias.size):
            raise ShapeError(
                f"weights shape {self.weights.shape} != "
                f"({self.visible_bias.size}, {self.hidden_bias.size})"
            )
        self.groups.check_channels(self.hidden_bias.size)
        if self.penalty is not NEG_INFINITY:
            p = float(self.penalty)
            if p > 0:
                raise ValueError(f"penalty must be <= 0, got {p}")
            self.penalty = p

    @property
    def n_hidden(self) -> int:
        return self.hidden_bias.size

    @property
    def n_visible(self) -> int:
        return self.visible_bias.size

    def hidden_coupling(self) -> np.ndarray:
        """Materialized symmetric hidden-hidden matrix (finite penalty only)."""
        if self.penalty is NEG_INFINITY:
            raise ValueError("symbolic penalty has no finite matrix form")
        same = self.groups.group_of[:, None] == self.groups.group_of[None, :]
        mat = np.where(same, float(self.penalty), 0.0)
        np.fill_diagonal(mat, 0.0)
        return mat

    def hidden_inputs(self, visible: np.ndarray) -> np.ndarray:
        """Per-unit input bias_h + v' W given clamped visibles."""
        visible = np.asarray(visible, dtype=np.float64)
        if visible.shape != (self.n_visible,):
            raise ShapeError(f"visible shape {visible.shape} != ({self.n_visible},)")
        return self.hidden_bias + visible @ self.weights


@dataclass
class PosteriorDistribution:
    """Exact posterior over hidden configurations given clamped visibles."""

    group_tables: list = field(default_factory=list)   # per group: (|g| + 2,) table
    unit_marginals: np.ndarray = None                  # (H,)


def _group_state_tables_symbolic(z: np.ndarray, spec: GroupSpec):
    tables = []
    for members in spec.groups:
        w = np.concatenate(([1.0], np.exp(z[list(members)]), [0.0]))
        tables.append(w / w[:-1].sum())
    return tables


def enumerate_posterior(machine: BoltzmannMachine, visible: np.ndarray) -> PosteriorDistribution:
    """Exact per-group posterior tables and per-unit marginals.

    With the symbolic penalty, only each group's ground and one-hot states
    carry weight and the factorized closed form is used directly.  With a
    finite penalty, all 2**H joint states are enumerated (in chunks), which
    is guarded at H <= 20.
    """
    h = machine.n_hidden
    if h > ENUMERATION_LIMIT:
        raise SizeError(f"enumeration supports at most {ENUMERATION_LIMIT} hidden units, got {h}")
    z = machine.hidden_inputs(visible)
    spec = machine.groups

    if machine.penalty is NEG_INFINITY:
        tables = _group_state_tables_symbolic(z, spec)
        marginals = np.empty(h, dtype=np.float64)
        for gid, members in enumerate(spec.groups):
            marginals[list(members)] = tables[gid][1:-1]
        return PosteriorDistribution(group_tables=tables, unit_marginals=marginals)

    penalty = float(machine.penalty)
    n_states = 1 << h
    chunk = 1 << min(_CHUNK_BITS, h)
    bit_cols = np.arange(h)

    # accumulators: per-group raw-state weights (2**|g| each) and unit marginals
    raw_tables = [np.zeros(1 << len(g), dtype=np.float64) for g in spec.groups]
    marg_acc = np.zeros(h, dtype=np.float64)
    total = 0.0

    group_members = [np.array(g, dtype=np.intp) for g in spec.groups]
    for start in range(0, n_states, chunk):
        codes = np.arange(start, min(start + chunk, n_states), dtype=np.uint64)
        bits = ((codes[:, None] >> bit_cols[None, :].astype(np.uint64)) & 1).astype(np.float64)
        active_per_group = np.stack(
            [bits[:, m].sum(axis=1) for m in group_members], axis=1
        )
        pair_count = (active_per_group * (active_per_group - 1.0) / 2.0).sum(axis=1)
        logw = bits @ z + 2.0 * penalty * pair_count
        w = np.exp(logw)
        total += w.sum()
        marg_acc += w @ bits
        for gid, m in enumerate(group_members):
            local_code = (bits[:, m] @ (2.0 ** np.arange(len(m)))).astype(np.intp)
            np.add.at(raw_tables[gid], local_code, w)

    # groups are independent given v, so each raw table normalizes on its own
    tables = []
    for gid, members in enumerate(spec.groups):
        raw = raw_tables[gid] / raw_tables[gid].sum()
        size = len(members)
        table = np.empty(size + 2, dtype=np.float64)
        table[0] = raw[0]
        one_hot_codes = [1 << k for k in range(size)]
        table[1:-1] = raw[one_hot_codes]
        invalid = np.ones(raw.size, dtype=bool)
        invalid[[0, *one_hot_codes]] = False
        table[-1] = raw[invalid].sum()
        tables.append(table)
    return PosteriorDistribution(group_tables=tables, unit_marginals=marg_acc / total)


@dataclass
class GibbsResult:
    unit_marginals: np.ndarray      # (H,)
    group_tables: list              # same layout as PosteriorDistribution
    forbidden_frequency: float      # fraction of recorded sweeps with any invalid group
    samples: int


def gibbs_sample(
    machine: BoltzmannMachine,
    visible: np.ndarray,
    sweeps: int,
    burn_in: int,
    rng: Rng,
) -> GibbsResult:
    """Single-site Gibbs chain over the hidden units, visibles clamped.

    Units are updated in fixed ascending order; a unit turns on with
    probability sigmoid(input_i + 2 * penalty * active_same_group), the 2
    matching the ordered-pair convention of the joint weight.  Statistics
    are collected once per sweep after ``burn_in`` sweeps.
    """
    if machine.penalty is NEG_INFINITY:
        raise ValueError("gibbs_sample needs a finite penalty; use enumerate_posterior")
    if not sweeps > burn_in >= 0:
        raise ValueError(f"need sweeps > burn_in >= 0, got {sweeps}, {burn_in}")
    penalty = float(machine.penalty)
    z = machine.hidden_inputs(visible)
    spec = machine.groups
    h_count = machine.n_hidden

    group_of = [int(g) for g in spec.group_of]
    local_slot = np.empty(h_count, dtype=np.intp)
    for members in spec.groups:
        for slot, unit in enumerate(members):
            local_slot[unit] = slot

    state = [0] * h_count
    active_in_group = [0] * spec.n_groups

    marg = np.zeros(h_count, dtype=np.float64)
    table_counts = [np.zeros(len(g) + 2, dtype=np.float64) for g in spec.groups]
    forbidden_sweeps = 0
    recorded = 0

    z_list = [float(v) for v in z]
    for sweep in range(sweeps):
        for i in range(h_count):
            gid = group_of[i]
            others = active_in_group[gid] - state[i]
            field_i = z_list[i] + 2.0 * penalty * others
            if field_i >= 0:
                p_on = 1.0 / (1.0 + math.exp(-field_i))
            else:
                e = math.exp(field_i)
                p_on = e / (1.0 + e)
            new = 1 if rng.uniform() < p_on else 0
            if new != state[i]:
                active_in_group[gid] += new - state[i]
                state[i] = new
        if sweep < burn_in:
            continue
        recorded += 1
        any_forbidden = False
        for gid, members in enumerate(spec.groups):
            c = active_in_group[gid]
            if c == 0:
                table_counts[gid][0] += 1
            elif c == 1:
                winner = next(u for u in members if state[u])
                table_counts[gid][1 + local_slot[winner]] += 1
            else:
                table_counts[gid][-1] += 1
                any_forbidden = True
        if any_forbidden:
            forbidden_sweeps += 1
        for i in range(h_count):
            marg[i] += state[i]

    return GibbsResult(
        unit_marginals=marg / recorded,
        group_tables=[t / recorded for t in table_counts],
        forbidden_frequency=forbidden_sweeps / recorded,
        samples=recorded,
    )


def tv_distance(p, q) -> float:
    """Total variation distance 0.5 * sum |p_i - q_i| between two
    distributions on the same support."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"support mismatch: {p.shape} vs {q.shape}")
    for name, dist in (("p", p), ("q", q)):
        if abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {dist.sum()!r}, not 1")
    return 0.5 * float(np.abs(p - q).sum())


def save_machine(path, machine: BoltzmannMachine) -> None:
    """Plain-text machine definition.

    Line 1: ``V H``; line 2: group sizes (the partition must be
    contiguous); line 3: penalty as a decimal or the token ``-inf`` for
    the symbolic value; then hidden biases (H values), visible biases
    (V values), and V weight rows of H values, whitespace-separated.
    """
    if not machine.groups.is_contiguous():
        raise ValueError("machine files support contiguous group partitions only")
    lines = [
        f"{machine.n_visible} {machine.n_hidden}",
        " ".join(str(int(s)) for s in machine.groups.sizes),
        "-inf" if machine.penalty is NEG_INFINITY else repr(float(machine.penalty)),
        " ".join(repr(float(v)) for v in machine.hidden_bias),
        " ".join(repr(float(v)) for v in machine.visible_bias),
    ]
    for row in machine.weights:
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def load_machine(path) -> BoltzmannMachine:
    from .errors import FormatError

    with open(path, "r", encoding="ascii") as f:
        lines = [ln for ln in (raw.strip() for raw in f) if ln]
    try:
        v_count, h_count = (int(tok) for tok in lines[0].split())
        sizes = [int(tok) for tok in lines[1].split()]
        penalty = NEG_INFINITY if lines[2] == "-inf" else float(lines[2])
        hidden_bias = np.array([float(t) for t in lines[3].split()])
        visible_bias = np.array([float(t) for t in lines[4].split()])
        weights = np.array([[float(t) for t in lines[5 + r].split()] for r in range(v_count)])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed machine file {path}: {exc}") from exc
    if sum(sizes) != h_count or hidden_bias.size != h_count or visible_bias.size != v_count:
        raise FormatError(f"inconsistent dimensions in machine file {path}")
    try:
        return BoltzmannMachine(
            hidden_bias=hidden_bias,
            visible_bias=visible_bias,
            weights=weights,
            groups=GroupSpec.from_sizes(sizes),
            penalty=penalty,
        )
    except (ShapeError, ValueError) as exc:
        raise FormatError(f"invalid machine file {path}: {exc}") from exc
