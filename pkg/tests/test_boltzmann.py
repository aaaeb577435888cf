"""Competitive Boltzmann machine: exact enumeration against a pure-Python
reference, the finite-penalty limit, Gibbs sampling, and machine files."""

import math

import numpy as np
import pytest

from gsmax.boltzmann import (
    ENUMERATION_LIMIT,
    NEG_INFINITY,
    BoltzmannMachine,
    enumerate_posterior,
    gibbs_sample,
    load_machine,
    save_machine,
    tv_distance,
)
from gsmax.errors import FormatError, ShapeError, SizeError
from gsmax.groups import GroupSpec
from gsmax.rng import Rng


def make_machine(rng, n_hidden, n_visible, sizes, penalty, scale=2.0):
    return BoltzmannMachine(
        hidden_bias=rng.uniform_array(n_hidden, -scale, scale),
        visible_bias=rng.uniform_array(n_visible, -scale, scale),
        weights=rng.uniform_array((n_visible, n_hidden), -scale, scale),
        groups=GroupSpec.from_sizes(sizes),
        penalty=penalty,
    )


def random_binary(rng, n):
    return np.array([float(rng.integer(2)) for _ in range(n)])


def reference_posterior(machine, visible):
    """Brute-force oracle: walk every hidden configuration in pure Python,
    weight it by exp(b.h + v'Wh + h'Hh) with the ordered-pair convention
    (each co-active same-group pair costs 2 * penalty), then marginalize.
    Returns (unit_marginals, group_tables) in the library's table layout."""
    h_count = machine.n_hidden
    z = [
        float(machine.hidden_bias[i])
        + sum(float(visible[a]) * float(machine.weights[a, i]) for a in range(machine.n_visible))
        for i in range(h_count)
    ]
    symbolic = machine.penalty is NEG_INFINITY
    groups = machine.groups.groups

    weights = []
    for code in range(1 << h_count):
        h = [(code >> i) & 1 for i in range(h_count)]
        pairs = 0
        for members in groups:
            c = sum(h[i] for i in members)
            pairs += c * (c - 1) // 2
        if pairs and symbolic:
            weights.append(0.0)
            continue
        logw = sum(h[i] * z[i] for i in range(h_count))
        if pairs:
            logw += 2.0 * float(machine.penalty) * pairs
        weights.append(math.exp(logw))
    total = math.fsum(weights)

    marginals = np.array([
        math.fsum(w for code, w in enumerate(weights) if (code >> i) & 1) / total
        for i in range(h_count)
    ])
    tables = []
    for members in groups:
        table = np.zeros(len(members) + 2)
        for code, w in enumerate(weights):
            active = [slot for slot, i in enumerate(members) if (code >> i) & 1]
            if not active:
                table[0] += w
            elif len(active) == 1:
                table[1 + active[0]] += w
            else:
                table[-1] += w
        tables.append(table / total)
    return marginals, tables


class TestForcedValues:
    def test_single_unit_even_odds(self):
        machine = BoltzmannMachine(
            hidden_bias=np.zeros(1),
            visible_bias=np.zeros(1),
            weights=np.zeros((1, 1)),
            groups=GroupSpec.from_sizes([1]),
            penalty=NEG_INFINITY,
        )
        post = enumerate_posterior(machine, np.zeros(1))
        assert post.unit_marginals[0] == pytest.approx(0.5, abs=1e-15)

    def test_two_unit_group_zero_bias_thirds(self):
        machine = BoltzmannMachine(
            hidden_bias=np.zeros(2),
            visible_bias=np.zeros(1),
            weights=np.zeros((1, 2)),
            groups=GroupSpec.from_sizes([2]),
            penalty=NEG_INFINITY,
        )
        post = enumerate_posterior(machine, np.zeros(1))
        np.testing.assert_allclose(post.unit_marginals, [1 / 3, 1 / 3], atol=1e-15)
        np.testing.assert_allclose(post.group_tables[0], [1 / 3, 1 / 3, 1 / 3, 0.0], atol=1e-15)

    def test_symbolic_tables_have_zero_invalid_mass(self):
        rng = Rng(40)
        machine = make_machine(rng, 6, 3, [3, 2, 1], NEG_INFINITY)
        post = enumerate_posterior(machine, random_binary(rng, 3))
        for table in post.group_tables:
            assert table[-1] == 0.0
            assert table.sum() == pytest.approx(1.0, abs=1e-12)


class TestAgainstReference:
    def test_symbolic_matches_brute_force(self):
        rng = Rng(41)
        for _ in range(15):
            sizes = [1 + rng.integer(4) for _ in range(1 + rng.integer(3))]
            machine = make_machine(rng, sum(sizes), 1 + rng.integer(4), sizes, NEG_INFINITY)
            v = random_binary(rng, machine.n_visible)
            post = enumerate_posterior(machine, v)
            ref_marg, ref_tables = reference_posterior(machine, v)
            np.testing.assert_allclose(post.unit_marginals, ref_marg, atol=1e-12, rtol=0)
            for got, want in zip(post.group_tables, ref_tables):
                np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_finite_penalty_matches_brute_force(self):
        rng = Rng(42)
        for _ in range(15):
            sizes = [1 + rng.integer(4) for _ in range(1 + rng.integer(3))]
            penalty = -rng.uniform(0.0, 6.0)
            machine = make_machine(rng, sum(sizes), 1 + rng.integer(4), sizes, penalty)
            v = random_binary(rng, machine.n_visible)
            post = enumerate_posterior(machine, v)
            ref_marg, ref_tables = reference_posterior(machine, v)
            np.testing.assert_allclose(post.unit_marginals, ref_marg, atol=1e-12, rtol=0)
            for got, want in zip(post.group_tables, ref_tables):
                np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_zero_penalty_gives_independent_sigmoids(self):
        """With no coupling each unit is an independent logistic unit, so
        the marginals have a closed form to compare against.  Uses 17
        hidden units to also exercise the chunked enumeration path."""
        rng = Rng(43)
        machine = make_machine(rng, 17, 2, [5, 5, 4, 3], 0.0, scale=1.5)
        v = random_binary(rng, 2)
        post = enumerate_posterior(machine, v)
        z = machine.hidden_inputs(v)
        np.testing.assert_allclose(post.unit_marginals, 1 / (1 + np.exp(-z)), atol=1e-10, rtol=0)

    def test_enumeration_size_guard(self):
        rng = Rng(44)
        machine = make_machine(rng, ENUMERATION_LIMIT + 1, 1, [ENUMERATION_LIMIT + 1], -1.0)
        with pytest.raises(SizeError):
            enumerate_posterior(machine, np.zeros(1))


class TestPenaltyLimit:
    def test_tv_to_symbolic_shrinks_as_penalty_grows(self):
        """Comparable group tables: the finite-penalty posterior converges
        to the symbolic one, below 1e-4 total variation by penalty -30."""
        rng = Rng(45)
        machine_sym = make_machine(rng, 7, 3, [3, 2, 2], NEG_INFINITY)
        v = random_binary(rng, 3)
        sym = enumerate_posterior(machine_sym, v)
        last = None
        for penalty in (-5.0, -10.0, -20.0, -30.0):
            machine = BoltzmannMachine(
                hidden_bias=machine_sym.hidden_bias,
                visible_bias=machine_sym.visible_bias,
                weights=machine_sym.weights,
                groups=machine_sym.groups,
                penalty=penalty,
            )
            post = enumerate_posterior(machine, v)
            tv = max(
                tv_distance(got, want)
                for got, want in zip(post.group_tables, sym.group_tables)
            )
            if last is not None:
                assert tv < last
            last = tv
        assert last < 1e-4


class TestGibbs:
    def test_single_unit_fair_coin(self):
        machine = BoltzmannMachine(
            hidden_bias=np.zeros(1),
            visible_bias=np.zeros(1),
            weights=np.zeros((1, 1)),
            groups=GroupSpec.from_sizes([1]),
            penalty=-30.0,
        )
        result = gibbs_sample(machine, np.zeros(1), sweeps=20000, burn_in=1000, rng=Rng(46))
        assert result.samples == 19000
        assert abs(result.unit_marginals[0] - 0.5) < 0.015

    def test_matches_enumeration(self):
        rng = Rng(47)
        machine = make_machine(rng, 6, 3, [2, 2, 2], -30.0, scale=1.0)
        v = random_binary(rng, 3)
        exact = enumerate_posterior(machine, v)
        result = gibbs_sample(machine, v, sweeps=40000, burn_in=2000, rng=Rng(48))
        for got, want in zip(result.group_tables, exact.group_tables):
            assert tv_distance(got, want) < 0.02
        assert result.forbidden_frequency < 1e-3

    def test_deterministic_under_seed(self):
        rng = Rng(49)
        machine = make_machine(rng, 4, 2, [2, 2], -10.0, scale=1.0)
        v = random_binary(rng, 2)
        a = gibbs_sample(machine, v, sweeps=500, burn_in=50, rng=Rng(50))
        b = gibbs_sample(machine, v, sweeps=500, burn_in=50, rng=Rng(50))
        np.testing.assert_array_equal(a.unit_marginals, b.unit_marginals)
        assert a.forbidden_frequency == b.forbidden_frequency

    def test_rejects_symbolic_penalty(self):
        machine = BoltzmannMachine(
            hidden_bias=np.zeros(2),
            visible_bias=np.zeros(1),
            weights=np.zeros((1, 2)),
            groups=GroupSpec.from_sizes([2]),
            penalty=NEG_INFINITY,
        )
        with pytest.raises(ValueError):
            gibbs_sample(machine, np.zeros(1), sweeps=10, burn_in=1, rng=Rng(0))


class TestTvDistance:
    def test_worked_example(self):
        assert tv_distance([0.5, 0.5], [0.75, 0.25]) == pytest.approx(0.25, abs=1e-15)

    def test_identical_is_zero(self):
        assert tv_distance([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0

    def test_support_mismatch(self):
        with pytest.raises(ShapeError):
            tv_distance([0.5, 0.5], [1.0])

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            tv_distance([0.5, 0.6], [0.5, 0.5])


class TestMachineValidation:
    def test_positive_penalty_rejected(self):
        with pytest.raises(ValueError):
            BoltzmannMachine(
                hidden_bias=np.zeros(2),
                visible_bias=np.zeros(1),
                weights=np.zeros((1, 2)),
                groups=GroupSpec.from_sizes([2]),
                penalty=0.5,
            )

    def test_weight_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            BoltzmannMachine(
                hidden_bias=np.zeros(2),
                visible_bias=np.zeros(1),
                weights=np.zeros((2, 2)),
                groups=GroupSpec.from_sizes([2]),
            )

    def test_coupling_matrix_layout(self):
        machine = BoltzmannMachine(
            hidden_bias=np.zeros(3),
            visible_bias=np.zeros(1),
            weights=np.zeros((1, 3)),
            groups=GroupSpec.from_sizes([2, 1]),
            penalty=-7.0,
        )
        mat = machine.hidden_coupling()
        expected = np.array([
            [0.0, -7.0, 0.0],
            [-7.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ])
        np.testing.assert_array_equal(mat, expected)

    def test_symbolic_has_no_matrix_form(self):
        machine = BoltzmannMachine(
            hidden_bias=np.zeros(2),
            visible_bias=np.zeros(1),
            weights=np.zeros((1, 2)),
            groups=GroupSpec.from_sizes([2]),
        )
        with pytest.raises(ValueError):
            machine.hidden_coupling()


class TestMachineFiles:
    def test_round_trip_is_exact(self, tmp_path):
        rng = Rng(51)
        machine = make_machine(rng, 5, 3, [2, 2, 1], -12.5)
        path = tmp_path / "machine.txt"
        save_machine(path, machine)
        loaded = load_machine(path)
        np.testing.assert_array_equal(loaded.hidden_bias, machine.hidden_bias)
        np.testing.assert_array_equal(loaded.visible_bias, machine.visible_bias)
        np.testing.assert_array_equal(loaded.weights, machine.weights)
        assert loaded.groups == machine.groups
        assert loaded.penalty == machine.penalty

    def test_symbolic_penalty_round_trip(self, tmp_path):
        rng = Rng(52)
        machine = make_machine(rng, 4, 2, [2, 2], NEG_INFINITY)
        path = tmp_path / "machine.txt"
        save_machine(path, machine)
        assert load_machine(path).penalty is NEG_INFINITY

    @pytest.mark.parametrize(
        "content",
        [
            "",
            "3 4\n2 2\n-inf\n0 0 0 0\n",                      # truncated
            "1 2\n2\nnot_a_number\n0 0\n0\n0 0\n",            # bad penalty token
            "1 2\n3\n-inf\n0 0\n0\n0 0\n",                    # sizes disagree with H
            "1 2\n2\n-inf\n0 0 0\n0\n0 0\n",                  # wrong bias length
            "1 2\n2\n1.5\n0 0\n0\n0 0\n",                     # penalty above zero
        ],
    )
    def test_malformed_files_rejected(self, tmp_path, content):
        path = tmp_path / "bad.txt"
        path.write_text(content)
        with pytest.raises(FormatError):
            load_machine(path)
