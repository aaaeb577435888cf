"""Command-line entry points.

Subcommands: train, discover, oracle-check, visualize-filters, gen-data.
Every command is a pure function of its configuration and input files;
reruns produce byte-identical artifacts.  Exit codes: 0 on success, 1 on
validation failures (bad config, malformed inputs, failed checks), 2 on
I/O failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import load_tensors, save_tensors
from .config import CifarSource, FileSource, RunConfig, load_config
from .data import (
    RotatedEdgesSpec,
    SyntheticSpec,
    gen_hierarchical_gaussians,
    gen_rotated_edge_sets,
    load_dataset,
    read_cifar_binary,
    save_dataset,
)
from .discovery import (
    associate_neurons,
    chance_level,
    group_similarity_report,
    subclass_accuracy,
    write_association_csv,
    write_summary_json,
)
from .errors import ConfigError, GsmaxError, ShapeError
from .groups import GroupSpec
from .network import Network, eval_outputs, train_network
from .oracle_check import run_all
from .ppm import write_filter_grid
from .rng import Rng


def resolve_datasets(dataset):
    """(train, test) HierarchicalDatasets for any dataset description."""
    if isinstance(dataset, SyntheticSpec):
        return gen_hierarchical_gaussians(dataset)
    if isinstance(dataset, RotatedEdgesSpec):
        return gen_rotated_edge_sets(dataset)
    if isinstance(dataset, CifarSource):
        return (read_cifar_binary(dataset.train_path, dataset.variant),
                read_cifar_binary(dataset.test_path, dataset.variant))
    if isinstance(dataset, FileSource):
        return (load_dataset(dataset.train_path, split="train"),
                load_dataset(dataset.test_path, split="test"))
    raise ConfigError(f"unsupported dataset description {type(dataset).__name__}")


def _groups_from_params(params) -> GroupSpec | None:
    if "group_sizes" in params:
        return GroupSpec.from_sizes(list(params["group_sizes"]))
    if "groups" in params:
        value = params["groups"]
        return value if isinstance(value, GroupSpec) else GroupSpec(value)
    return None


def _grouping_after(config: RunConfig, layer_index: int, count: int) -> GroupSpec:
    """The grouping that applies to layer_index's output channels: the
    next grouped activation downstream, else the configured discovery
    grouping, else singletons."""
    for spec in config.layers[layer_index + 1:]:
        if spec.kind in ("gsmax", "group_maxout"):
            grouping = _groups_from_params(spec.params)
            if grouping is not None and grouping.n_channels == count:
                return grouping
    if config.neuron_groups is not None and config.neuron_groups.n_channels == count:
        return config.neuron_groups
    return GroupSpec.from_sizes([1] * count)


def _write_metrics_csv(path, metrics) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "train_super_acc",
                         "test_super_acc", "lr"])
        for m in metrics:
            writer.writerow([m.epoch, repr(float(m.train_loss)),
                             repr(float(m.train_super_acc)),
                             repr(float(m.test_super_acc)), repr(float(m.lr))])


def _similarity_payload(report) -> dict:
    per_group = [None if np.isnan(v) else float(v) for v in report.per_group]
    return {
        "within_mean": float(report.within_mean),
        "across_mean": float(report.across_mean),
        "per_group": per_group,
        "n_within_pairs": int(report.n_within_pairs),
        "n_across_pairs": int(report.n_across_pairs),
    }


def cmd_train(config: RunConfig) -> dict:
    """Train from scratch; write checkpoint, metrics CSV, activation
    dump, and (for a grouped dense first layer) a similarity report."""
    train_ds, test_ds = resolve_datasets(config.dataset)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rng = Rng(config.seed)
    net = Network.from_specs(config.input_shape, config.network_layers(), rng)
    metrics = train_network(net, train_ds.samples, train_ds.super_labels,
                            test_ds.samples, test_ds.super_labels,
                            config.train, rng, workers=config.workers)

    artifacts = {
        "checkpoint": out / "checkpoint.bin",
        "metrics": out / "metrics.csv",
        "activations": out / "activations.bin",
    }
    save_tensors(artifacts["checkpoint"], net.parameters())
    _write_metrics_csv(artifacts["metrics"], metrics)

    _, acts = eval_outputs(net, test_ds.samples, workers=config.workers,
                           capture=config.discovery_layer)
    save_tensors(artifacts["activations"], {
        "activations": acts,
        "super_labels": test_ds.super_labels,
        "sub_labels": test_ds.sub_labels,
    })

    first = net.layers[0]
    if first.kind == "dense":
        grouping = _grouping_after(config, 0, first.weight.shape[1])
        if grouping.n_groups >= 2 and max(grouping.sizes) > 1:
            report = group_similarity_report(first.weight.T, grouping)
            artifacts["similarity"] = out / "similarity.json"
            with open(artifacts["similarity"], "w", encoding="ascii") as fh:
                fh.write(json.dumps(_similarity_payload(report),
                                    sort_keys=True) + "\n")

    if metrics:
        last = metrics[-1]
        print(f"epoch {last.epoch}: train_loss {last.train_loss:.4f} "
              f"train_super_acc {last.train_super_acc:.4f} "
              f"test_super_acc {last.test_super_acc:.4f}")
    print(f"artifacts written to {out}")
    return artifacts


def cmd_discover(config: RunConfig, checkpoint_path=None) -> dict:
    """Associate discovery-layer neurons with sub-classes and score the
    association on the test set (disjoint halves under --holdout)."""
    _, test_ds = resolve_datasets(config.dataset)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if checkpoint_path is None:
        checkpoint_path = out / "checkpoint.bin"

    if config.neuron_groups is None:
        raise ConfigError(
            "discovery needs a neuron grouping: a gsmax discovery layer or "
            "an explicit [network] groups option")
    rng = Rng(config.seed)
    net = Network.from_specs(config.input_shape, config.network_layers(), rng)
    try:
        net.load_parameters(load_tensors(checkpoint_path))
    except ShapeError as exc:
        raise ConfigError(
            f"checkpoint {checkpoint_path} does not match the configured "
            f"network: {exc}") from exc

    _, acts = eval_outputs(net, test_ds.samples, workers=config.workers,
                           capture=config.discovery_layer)
    if acts.shape[1] != config.neuron_groups.n_channels:
        raise ConfigError(
            f"discovery layer emits {acts.shape[1]} channels but the "
            f"grouping covers {config.neuron_groups.n_channels}")
    hierarchy = replace(test_ds.hierarchy, neuron_groups=config.neuron_groups)

    supers = test_ds.super_labels
    subs = test_ds.sub_labels
    if config.holdout:
        assoc_sel = slice(0, None, 2)       # interleaved halves so every
        eval_sel = slice(1, None, 2)        # sub-class appears in both
    else:
        assoc_sel = eval_sel = slice(None)
    table = associate_neurons(acts[assoc_sel], supers[assoc_sel],
                              subs[assoc_sel], hierarchy)
    accuracy = subclass_accuracy(acts[eval_sel], supers[eval_sel],
                                 subs[eval_sel], table, hierarchy)
    chance = chance_level(hierarchy)

    artifacts = {
        "association": out / "discovery.csv",
        "summary": out / "summary.json",
    }
    write_association_csv(artifacts["association"], table, hierarchy)
    write_summary_json(artifacts["summary"], accuracy, chance,
                       n_samples=int(acts[eval_sel].shape[0]),
                       holdout=config.holdout, control=config.control)
    print(f"sub-class accuracy {accuracy:.4f} (chance {chance:.4f})")
    return artifacts


def cmd_oracle_check(trials: int, instances: int, seed: int) -> int:
    report = run_all(trials=trials, instances=instances, seed=seed)
    print(report.format())
    return 0 if report.passed else 1


def cmd_visualize_filters(config: RunConfig, checkpoint_path, layer_index: int,
                          out_path) -> None:
    """Export the addressed layer's filters as a grouped PPM grid."""
    rng = Rng(config.seed)
    net = Network.from_specs(config.input_shape, config.network_layers(), rng)
    try:
        net.load_parameters(load_tensors(checkpoint_path))
    except ShapeError as exc:
        raise ConfigError(
            f"checkpoint {checkpoint_path} does not match the configured "
            f"network: {exc}") from exc
    if not 0 <= layer_index < len(net.layers):
        raise ConfigError(
            f"layer index {layer_index} out of range for {len(net.layers)} layers")
    layer = net.layers[layer_index]
    if layer.kind == "dense":
        weights = layer.weight
        count = weights.shape[1]
    elif layer.kind == "conv2d":
        weights = layer.filters
        count = weights.shape[0]
    else:
        raise ConfigError(
            f"layer {layer_index} ({layer.kind}) has no filters to draw")
    grouping = _grouping_after(config, layer_index, count)
    write_filter_grid(out_path, weights, grouping)
    print(f"filter grid written to {out_path}")


def cmd_gen_data(config: RunConfig) -> dict:
    train_ds, test_ds = resolve_datasets(config.dataset)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {"train": out / "train.bin", "test": out / "test.bin"}
    save_dataset(artifacts["train"], train_ds)
    save_dataset(artifacts["test"], test_ds)
    print(f"wrote {artifacts['train']} ({train_ds.samples.shape[0]} samples) "
          f"and {artifacts['test']} ({test_ds.samples.shape[0]} samples)")
    return artifacts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsmax",
        description="Grouped-softmax networks: training, oracle "
                    "certification, and sub-class concept discovery.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="run configuration file")
    common.add_argument("--seed", type=int, metavar="N",
                        help="override the configured seed")
    common.add_argument("--out", metavar="DIR",
                        help="override the configured output directory")
    common.add_argument("--holdout", action="store_true", default=None,
                        help="associate and evaluate on disjoint halves")
    common.add_argument("--control", action="store_true", default=None,
                        help="swap gsmax layers for identity")
    common.add_argument("--workers", type=int, metavar="N",
                        help="threads for eval-mode forward passes")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common],
                   help="train a network and write run artifacts")
    p = sub.add_parser("discover", parents=[common],
                       help="associate neurons with sub-classes")
    p.add_argument("--checkpoint", metavar="PATH",
                   help="checkpoint to load (default: <out>/checkpoint.bin)")
    p = sub.add_parser("oracle-check", parents=[common],
                       help="run the randomized certification suites")
    p.add_argument("--trials", type=int, default=100, metavar="N",
                   help="enumeration comparisons (default 100)")
    p.add_argument("--instances", type=int, default=20, metavar="N",
                   help="gradient instances per layer kind (default 20)")
    p = sub.add_parser("visualize-filters", parents=[common],
                       help="export a grouped filter grid as PPM")
    p.add_argument("checkpoint", help="checkpoint file to read filters from")
    p.add_argument("layer_index", type=int, help="index of the filter layer")
    p.add_argument("out_path", help="PPM file to write")
    sub.add_parser("gen-data", parents=[common],
                   help="generate and dump the configured dataset")
    return parser


def _load_config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError(f"{args.command} requires --config PATH")
    return load_config(args.config, seed=args.seed, out_dir=args.out,
                       control=args.control, holdout=args.holdout,
                       workers=args.workers)


def _dispatch(args) -> int:
    if args.command == "oracle-check":
        return cmd_oracle_check(args.trials, args.instances,
                                args.seed if args.seed is not None else 0)
    config = _load_config(args)
    if args.command == "train":
        cmd_train(config)
    elif args.command == "discover":
        cmd_discover(config, checkpoint_path=args.checkpoint)
    elif args.command == "visualize-filters":
        cmd_visualize_filters(config, args.checkpoint, args.layer_index,
                              args.out_path)
    elif args.command == "gen-data":
        cmd_gen_data(config)
    else:
        raise ConfigError(f"unknown command {args.command!r}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except GsmaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
