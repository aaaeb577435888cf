"""Acceptance suite: one test per shipped guarantee, each recording a
single pass/fail line with the measured value against its tolerance.
The lines are echoed in the terminal summary (see conftest.py).

Criterion 5 (sub-class discovery beating chance by 20 points on the
synthetic preset) encodes the full training protocol faithfully; see
notes/decisions.md for the status of that gate.
"""

import json
import time
from dataclasses import replace

import numpy as np

from conftest import ACCEPTANCE_LINES
from gsmax.activation import gsmax_forward, ground_state_prob
from gsmax.boltzmann import (
    NEG_INFINITY,
    BoltzmannMachine,
    enumerate_posterior,
    gibbs_sample,
    tv_distance,
)
from gsmax.cli import cmd_discover, cmd_train, cmd_visualize_filters
from gsmax.config import RunConfig
from gsmax.data import gen_hierarchical_gaussians, read_cifar_binary
from gsmax.discovery import (
    Hierarchy,
    associate_neurons,
    chance_level,
    subclass_accuracy,
)
from gsmax.errors import FormatError
from gsmax.groups import GroupSpec
from gsmax.network import Network, eval_outputs, train_network
from gsmax.oracle_check import (
    checked_kinds,
    random_partition,
    run_enumeration_check,
    run_gradient_checks,
)
from gsmax.ppm import read_ppm
from gsmax.presets import get_preset
from gsmax.rng import Rng


def report(criterion: int, passed: bool, detail: str) -> None:
    flag = "PASS" if passed else "FAIL"
    line = f"criterion {criterion:02d} {flag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def preset_run_config(seed: int, control: bool, out_dir) -> RunConfig:
    preset = get_preset("synthetic_default", seed=seed)
    return RunConfig(
        name="synthetic_default",
        input_shape=preset.input_shape,
        layers=preset.layers,
        discovery_layer=preset.discovery_layer,
        neuron_groups=preset.neuron_groups,
        train=preset.train,
        dataset=preset.dataset,
        out_dir=str(out_dir),
        control=control,
        holdout=False,
        workers=1,
        preset_name="synthetic_default",
    )


def test_criterion_01_oracle_equivalence():
    start = time.perf_counter()
    result = run_enumeration_check(trials=100, seed=0)
    elapsed = time.perf_counter() - start
    ok = result.passed and elapsed < 5.0
    report(1, ok, f"max |delta| {result.max_deviation:.3e} over 100 machines "
                  f"(tolerance 1e-12), {elapsed:.2f}s (< 5s)")


def test_criterion_02_finite_penalty_limit():
    start = time.perf_counter()
    rng = Rng(2)
    worst_tv = 0.0
    for _ in range(20):
        n_hidden = 2 + rng.integer(11)
        n_visible = 1 + rng.integer(6)
        spec = random_partition(rng, n_hidden, max_group=4)
        args = dict(
            hidden_bias=rng.uniform_array((n_hidden,), -2.0, 2.0),
            visible_bias=rng.uniform_array((n_visible,), -2.0, 2.0),
            weights=rng.uniform_array((n_visible, n_hidden), -2.0, 2.0),
            groups=spec,
        )
        visible = (rng.uniform_array((n_visible,)) < 0.5).astype(np.float64)
        finite = enumerate_posterior(
            BoltzmannMachine(penalty=-30.0, **args), visible)
        symbolic = enumerate_posterior(
            BoltzmannMachine(penalty=NEG_INFINITY, **args), visible)
        for ft, st in zip(finite.group_tables, symbolic.group_tables):
            worst_tv = max(worst_tv, tv_distance(ft, st))

    spec = random_partition(rng, 6, max_group=3)
    machine = BoltzmannMachine(
        hidden_bias=rng.uniform_array((6,), -2.0, 2.0),
        visible_bias=rng.uniform_array((3,), -2.0, 2.0),
        weights=rng.uniform_array((3, 6), -2.0, 2.0),
        groups=spec,
        penalty=-30.0,
    )
    visible = (rng.uniform_array((3,)) < 0.5).astype(np.float64)
    exact = enumerate_posterior(machine, visible)
    chain = gibbs_sample(machine, visible, sweeps=110_000, burn_in=10_000,
                         rng=Rng(7))
    gibbs_tv = max(tv_distance(ct, et) for ct, et
                   in zip(chain.group_tables, exact.group_tables))
    elapsed = time.perf_counter() - start
    ok = (worst_tv < 1e-4 and gibbs_tv < 0.01
          and chain.forbidden_frequency < 1e-4 and elapsed < 30.0)
    report(2, ok, f"enumeration TV {worst_tv:.2e} (< 1e-4), gibbs TV "
                  f"{gibbs_tv:.4f} over 1e5 recorded sweeps (< 0.01), "
                  f"forbidden freq {chain.forbidden_frequency:.2e} (< 1e-4), "
                  f"{elapsed:.1f}s (< 30s)")


def test_criterion_03_gradient_certification():
    start = time.perf_counter()
    results = run_gradient_checks(instances=20, seed=0)
    elapsed = time.perf_counter() - start
    expected_kinds = {"dense", "conv2d", "maxpool2d", "relu", "dropout",
                      "gsmax", "group_maxout", "softmax_xent_head", "identity"}
    names = {r.name for r in results}
    worst = max(r.max_deviation for r in results)
    ok = (all(r.passed for r in results)
          and checked_kinds() == frozenset(expected_kinds)
          and {"gradient: gsmax [T=0.5]", "gradient: gsmax [T=1]",
               "gradient: gsmax [T=2]"} <= names
          and elapsed < 60.0)
    report(3, ok, f"max relative error {worst:.3e} (< 1e-6) over "
                  f"{len(results)} suites x 20 instances covering "
                  f"{len(expected_kinds)} layer kinds, {elapsed:.1f}s (< 60s)")


def test_criterion_04_gsmax_invariants():
    rng = Rng(4)
    cases = 1000
    worst_norm = 0.0
    for _ in range(cases):
        spec = random_partition(rng, 2 + rng.integer(11), max_group=4)
        z = rng.uniform_array((1, spec.n_channels), -4.0, 4.0)
        t = [0.25, 0.5, 1.0, 2.0][rng.integer(4)]
        p = gsmax_forward(z, spec, t)
        ground = ground_state_prob(z, spec, t)

        for gid, members in enumerate(spec.groups):
            m = list(members)
            total = p[0, m].sum() + ground[0, gid]
            worst_norm = max(worst_norm, abs(total - 1.0))
            assert np.argmax(z[0, m]) == np.argmax(p[0, m])

        target = rng.integer(spec.n_groups)
        z2 = z.copy()
        z2[0, list(spec.groups[target])] += rng.uniform_array(
            (len(spec.groups[target]),), -1.0, 1.0)
        p2 = gsmax_forward(z2, spec, t)
        for gid, members in enumerate(spec.groups):
            if gid != target:
                m = list(members)
                assert np.array_equal(p[0, m], p2[0, m])

    checked = 0
    while checked < cases:
        spec = random_partition(rng, 2 + rng.integer(8), max_group=4)
        z = rng.uniform_array((1, spec.n_channels), -2.0, 3.0)
        ps = [gsmax_forward(z, spec, t) for t in (2.0, 1.0, 0.5, 0.25)]
        for members in spec.groups:
            m = list(members)
            w = m[int(np.argmax(z[0, m]))]
            rest = [i for i in m if i != w]
            margin = z[0, w] - max(z[0, i] for i in rest) if rest else np.inf
            if z[0, w] <= 1e-6 or margin < 1e-6:
                continue
            seq = [p[0, w] for p in ps]
            assert all(a < b for a, b in zip(seq, seq[1:]))
            checked += 1

    ok = worst_norm < 1e-12
    report(4, ok, f"normalization residual {worst_norm:.2e} (< 1e-12), "
                  f"cross-group independence bit-exact, argmax preserved, "
                  f"temperature monotone on {checked} separated winners; "
                  f"{cases} cases per property")


def test_criterion_05_subclass_discovery(tmp_path, capsys):
    seeds = (0, 1, 2)
    chance = 1.0 / 3.0
    rows = []
    for seed in seeds:
        scores = {}
        for control in (False, True):
            tag = "control" if control else "gsmax"
            cfg = preset_run_config(seed, control, tmp_path / f"s{seed}_{tag}")
            cmd_train(cfg)
            cmd_discover(cfg)
            summary = json.loads(
                (tmp_path / f"s{seed}_{tag}" / "summary.json").read_text())
            scores[tag] = summary["accuracy"]
        rows.append((seed, scores["gsmax"], scores["control"]))
    capsys.readouterr()

    margin_ok = all(gs >= chance + 0.20 for _, gs, _ in rows)
    control_ok = all(gs > ctrl for _, gs, ctrl in rows)
    detail = ", ".join(
        f"seed {seed}: gsmax {gs:.4f} vs control {ctrl:.4f}"
        for seed, gs, ctrl in rows)
    report(5, margin_ok and control_ok,
           f"need accuracy >= {chance + 0.20:.4f} and > control on all "
           f"3 seeds; {detail}")


def test_criterion_06_chance_level_exactness():
    h = Hierarchy(20, tuple(k // 5 for k in range(100)))
    value = chance_level(h)
    report(6, value == 0.2,
           f"chance_level(20 supers x 5 subs) == {value!r} (want 0.2 exactly)")


def test_criterion_07_association_identity():
    # handcrafted fixture: three subs in one super, votes split 3/2/2
    h = Hierarchy(1, (0, 0, 0), neuron_groups=GroupSpec.from_sizes([3]))
    acts = np.eye(3)[[0, 0, 0, 1, 1, 2, 2]]
    supers = np.zeros(7, dtype=int)
    subs = np.array([0, 0, 1, 1, 2, 2, 2])
    table = associate_neurons(acts, supers, subs, h)
    acc = subclass_accuracy(acts, supers, subs, table, h)
    fixture_ok = acc == table.finalized().modal_vote_total() / 7.0

    # synthetic run: short training, association and scoring on one set
    preset = get_preset("synthetic_default", seed=0)
    train_ds, test_ds = gen_hierarchical_gaussians(preset.dataset)
    rng = Rng(0)
    net = Network.from_specs(preset.input_shape, preset.layers, rng)
    train_network(net, train_ds.samples, train_ds.super_labels,
                  test_ds.samples, test_ds.super_labels,
                  replace(preset.train, epochs=3), rng)
    _, acts = eval_outputs(net, test_ds.samples,
                           capture=preset.discovery_layer)
    hierarchy = replace(test_ds.hierarchy, neuron_groups=preset.neuron_groups)
    table = associate_neurons(acts, test_ds.super_labels, test_ds.sub_labels,
                              hierarchy)
    acc = subclass_accuracy(acts, test_ds.super_labels, test_ds.sub_labels,
                            table, hierarchy)
    run_ok = acc == table.modal_vote_total() / float(test_ds.n)

    report(7, fixture_ok and run_ok,
           f"accuracy == sum(modal votes)/N exactly on the handcrafted "
           f"fixture ({fixture_ok}) and on a trained synthetic run ({run_ok})")


def test_criterion_08_train_determinism(tmp_path, capsys):
    base = preset_run_config(0, False, tmp_path / "a")
    short = replace(base, train=replace(base.train, epochs=3))
    runs = {
        "a": short,
        "b": replace(short, out_dir=str(tmp_path / "b")),
        "c": replace(short, out_dir=str(tmp_path / "c"), workers=4),
    }
    blobs = {}
    for tag, cfg in runs.items():
        artifacts = cmd_train(cfg)
        blobs[tag] = (artifacts["metrics"].read_bytes(),
                      artifacts["checkpoint"].read_bytes())
    capsys.readouterr()
    rerun_ok = blobs["a"] == blobs["b"]
    workers_ok = blobs["a"] == blobs["c"]
    report(8, rerun_ok and workers_ok,
           f"metrics CSV and checkpoint byte-identical on rerun ({rerun_ok}) "
           f"and with workers=4 ({workers_ok})")


def test_criterion_09_grouped_filter_analysis(tmp_path, capsys):
    preset = get_preset("rotated_edges")
    cfg = RunConfig(
        name="rotated_edges",
        input_shape=preset.input_shape,
        layers=preset.layers,
        discovery_layer=preset.discovery_layer,
        neuron_groups=preset.neuron_groups,
        train=preset.train,
        dataset=preset.dataset,
        out_dir=str(tmp_path / "edges"),
        control=False,
        holdout=False,
        workers=1,
        preset_name="rotated_edges",
    )
    artifacts = cmd_train(cfg)
    similarity = json.loads(artifacts["similarity"].read_text())
    grid_path = tmp_path / "filters.ppm"
    cmd_visualize_filters(cfg, artifacts["checkpoint"], 0, grid_path)
    image = read_ppm(grid_path)
    capsys.readouterr()
    ok = (np.isfinite(similarity["within_mean"])
          and np.isfinite(similarity["across_mean"])
          and similarity["n_within_pairs"] > 0
          and similarity["n_across_pairs"] > 0
          and image.ndim == 3 and image.shape[2] == 3)
    report(9, ok, f"training completed; filter similarity within "
                  f"{similarity['within_mean']:.3f} / across "
                  f"{similarity['across_mean']:.3f}; grid "
                  f"{image.shape[1]}x{image.shape[0]} PPM parsed back")


def test_criterion_10_cifar_fixtures(tmp_path):
    def pixels(seed):
        rng = Rng(seed)
        return bytes(rng.integer(256) for _ in range(3072))

    p100 = [pixels(1), pixels(2)]
    path100 = tmp_path / "c100.bin"
    path100.write_bytes(bytes([0, 0]) + p100[0] + bytes([1, 1]) + p100[1])
    ds = read_cifar_binary(path100, "cifar100")
    raw = np.rint(ds.samples.reshape(2, -1) * 255).astype(np.uint8)
    c100_ok = (ds.super_labels.tolist() == [0, 1]
               and ds.sub_labels.tolist() == [0, 1]
               and bytes(raw[0]) == p100[0] and bytes(raw[1]) == p100[1])

    p10 = [pixels(3), pixels(4)]
    path10 = tmp_path / "c10.bin"
    path10.write_bytes(bytes([1]) + p10[0] + bytes([0]) + p10[1])
    ds10 = read_cifar_binary(path10, "cifar10")
    raw10 = np.rint(ds10.samples.reshape(2, -1) * 255).astype(np.uint8)
    c10_ok = (ds10.sub_labels.tolist() == [1, 0]
              and bytes(raw10[0]) == p10[0] and bytes(raw10[1]) == p10[1])

    truncated = tmp_path / "bad.bin"
    truncated.write_bytes(bytes([0, 0]) + p100[0][:-1])
    try:
        read_cifar_binary(truncated, "cifar100")
        malformed_ok = False
    except FormatError:
        malformed_ok = True

    report(10, c100_ok and c10_ok and malformed_ok,
           f"cifar100 2-record round-trip ({c100_ok}), cifar10 2-record "
           f"round-trip ({c10_ok}), malformed file raises ({malformed_ok})")
