"""Tests for the randomized certification suite itself."""

import numpy as np
import pytest

from gsmax.activation import gsmax_forward
from gsmax.layers import LAYER_KINDS
from gsmax.oracle_check import (
    ENUMERATION_TOLERANCE,
    GRADIENT_TOLERANCE,
    CheckResult,
    checked_kinds,
    random_partition,
    run_all,
    run_enumeration_check,
    run_gradient_checks,
)
from gsmax.rng import Rng


class TestCoverage:
    def test_every_registered_layer_kind_is_checked(self):
        assert checked_kinds() == frozenset(LAYER_KINDS)

    def test_full_suite_passes(self):
        report = run_all(trials=30, instances=5, seed=0)
        assert report.passed
        lines = report.format().splitlines()
        assert len(lines) == len(report.results) + 1
        assert lines[-1] == "all checks passed"
        assert all(line.startswith("ok  ") for line in lines[:-1])

    def test_gradient_errors_are_tiny_not_merely_passing(self):
        for result in run_gradient_checks(instances=3, seed=11):
            assert result.max_deviation < GRADIENT_TOLERANCE / 10


class TestEnumeration:
    def test_enumeration_agrees_at_tight_tolerance(self):
        result = run_enumeration_check(trials=25, seed=3)
        assert result.passed
        assert result.max_deviation < ENUMERATION_TOLERANCE

    def test_same_seed_reproduces_deviation(self):
        a = run_enumeration_check(trials=5, seed=42)
        b = run_enumeration_check(trials=5, seed=42)
        assert a.max_deviation == b.max_deviation

    def test_corrupted_activation_is_caught(self):
        # Off-by-one ground state: drop the "+1" from the denominator.
        def broken(z, spec, temperature):
            p = gsmax_forward(z, spec, temperature)
            scale = np.zeros_like(p)
            for members in spec.groups:
                cols = list(members)
                total = p[:, cols].sum(axis=1, keepdims=True)
                scale[:, cols] = 1.0 / np.maximum(total, 1e-300)
            return p * scale

        result = run_enumeration_check(trials=5, seed=0, forward=broken)
        assert not result.passed
        assert "FAIL" in result.line()

    def test_trials_must_be_positive(self):
        with pytest.raises(ValueError):
            run_enumeration_check(trials=0, seed=0)


class TestHarness:
    def test_instances_must_be_positive(self):
        with pytest.raises(ValueError):
            run_gradient_checks(instances=0, seed=0)

    def test_nan_deviation_fails(self):
        result = CheckResult("x", "dense", 1, float("nan"), 1e-6)
        assert not result.passed

    def test_random_partition_covers_all_channels(self):
        rng = Rng(5)
        for _ in range(50):
            spec = random_partition(rng, 12, max_group=4)
            assert spec.n_channels == 12
            assert max(spec.sizes) <= 4

    def test_failed_report_counts_failures(self):
        good = CheckResult("a", "dense", 1, 0.0, 1e-6)
        bad = CheckResult("b", "relu", 1, 1.0, 1e-6)
        from gsmax.oracle_check import OracleReport

        report = OracleReport((good, bad))
        assert not report.passed
        assert report.format().splitlines()[-1] == "1 of 2 checks FAILED"
