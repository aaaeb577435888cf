"""Generator correctness: reference streams, determinism, distribution."""

import math

import numpy as np
import pytest

from gsmax.rng import Rng

M64 = (1 << 64) - 1


def reference_splitmix64(seed, n):
    """Straight transcription of the published splitmix64 routine."""
    x = seed & M64
    out = []
    for _ in range(n):
        x = (x + 0x9E3779B97F4A7C15) & M64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        out.append(z ^ (z >> 31))
    return out


def reference_xoshiro256ss(seed, n):
    """Independent transcription of xoshiro256** over a splitmix64 seed."""
    s = reference_splitmix64(seed, 4)

    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & M64

    out = []
    for _ in range(n):
        out.append((rotl((s[1] * 5) & M64, 7) * 9) & M64)
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return out


class TestReferenceStream:
    def test_seed_zero_matches_published_splitmix_expansion(self):
        """State expansion must reproduce the canonical splitmix64 outputs
        for seed 0, whose first value 0xE220A8397B1DCDAF is the widely
        published test vector."""
        assert reference_splitmix64(0, 1)[0] == 0xE220A8397B1DCDAF
        g = Rng(0)
        assert [g._s0, g._s1, g._s2, g._s3] == reference_splitmix64(0, 4)

    def test_seed_zero_first_output(self):
        # frozen from the reference transcription above
        assert Rng(0).next_u64() == 0x99EC5F36CB75F2B4

    @pytest.mark.parametrize("seed", [0, 1, 42, 2**63, 123456789])
    def test_matches_reference_for_many_outputs(self, seed):
        g = Rng(seed)
        assert [g.next_u64() for _ in range(200)] == reference_xoshiro256ss(seed, 200)

    def test_same_seed_same_stream(self):
        a, b = Rng(7), Rng(7)
        assert [a.next_u64() for _ in range(50)] == [b.next_u64() for _ in range(50)]

    def test_adjacent_seeds_diverge_immediately(self):
        assert Rng(5).next_u64() != Rng(6).next_u64()
        # frozen divergence values for the pair (0, 1)
        assert Rng(0).next_u64() == 0x99EC5F36CB75F2B4
        assert Rng(1).next_u64() == 0xB3F2AF6D0FC710C5


class TestUniform:
    def test_unit_interval_contract(self):
        g = Rng(3)
        draws = [g.uniform(0.0, 1.0) for _ in range(1000)]
        assert all(0.0 <= d < 1.0 for d in draws)

    def test_general_range_contract(self):
        g = Rng(4)
        draws = [g.uniform(-2.5, 7.25) for _ in range(1000)]
        assert all(-2.5 <= d < 7.25 for d in draws)

    def test_degenerate_range_rejected(self):
        g = Rng(0)
        with pytest.raises(ValueError):
            g.uniform(0.5, 0.5)
        with pytest.raises(ValueError):
            g.uniform(1.0, -1.0)

    def test_mean_converges(self):
        """Law of large numbers: 1e5 unit draws have mean within 0.01 of
        0.5 (the standard error is ~0.0009, so 0.01 is > 10 sigma)."""
        g = Rng(2024)
        total = sum(g.uniform() for _ in range(100_000))
        assert abs(total / 100_000 - 0.5) < 0.01

    def test_array_matches_scalar_stream(self):
        a = Rng(9).uniform_array((3, 4), -1.0, 1.0)
        g = Rng(9)
        b = np.array([g.uniform(-1.0, 1.0) for _ in range(12)]).reshape(3, 4)
        np.testing.assert_array_equal(a, b)


class TestNormalAndHelpers:
    def test_normal_moments(self):
        g = Rng(11)
        xs = g.normal_array(50_000)
        assert abs(xs.mean()) < 0.02
        assert abs(xs.std() - 1.0) < 0.02

    def test_normal_is_finite(self):
        xs = Rng(12).normal_array(10_000)
        assert np.isfinite(xs).all()

    def test_integer_range_and_error(self):
        g = Rng(13)
        assert all(0 <= g.integer(7) < 7 for _ in range(500))
        with pytest.raises(ValueError):
            g.integer(0)

    def test_shuffle_is_permutation_and_deterministic(self):
        a = np.arange(20)
        Rng(14).shuffle(a)
        b = np.arange(20)
        Rng(14).shuffle(b)
        assert sorted(a.tolist()) == list(range(20))
        np.testing.assert_array_equal(a, b)

    def test_split_streams_differ(self):
        g = Rng(15)
        child = g.split()
        assert child.next_u64() != g.next_u64()
