"""Run configuration: INI-style files parsed into validated RunConfig.

Grammar (sections and keys; unknown names are rejected):

    [experiment]
    name = synthetic-discovery   # defaults to the preset name
    preset = synthetic_default   # optional, supplies defaults below
    seed = 0                     # overridden by --seed
    out_dir = runs/example       # overridden by --out
    control = false              # gsmax layers swapped for identity
    holdout = false              # associate and evaluate on disjoint halves
    workers = 1

    [dataset]                    # required unless the preset has one
    kind = synthetic | rotated_edges | cifar10 | cifar100 | file
    ...kind-specific keys (see _parse_dataset)

    [network]                    # required unless a preset is named
    input = 32                   # comma list for images, e.g. 3,32,32
    layers =
        dense units=64
        relu
        dense units=12
        gsmax groups=3,3,3,3 temperature=0.5
        group_maxout groups=3,3,3,3
        softmax_xent_head
    discovery_layer = 3          # optional, default: last gsmax layer

    [train]                      # per-key overrides of the preset schedule
    base_lr = 1.0
    epochs = 50
    batch_size = 32
    momentum = 0.5
    weight_decay = 0.0001
    lr_decay_factor = 0.1
    lr_decay_every_epochs = 25

Every failure names the file, line, section, and option involved; a
RunConfig is never partially constructed.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, replace

from .data import RotatedEdgesSpec, SyntheticSpec
from .errors import ConfigError, GsmaxError
from .groups import GroupSpec
from .layers import LayerSpec, build_layer
from .network import Network, TrainConfig
from .presets import Preset, find_discovery_layer, get_preset
from .rng import Rng

_SECTIONS = ("experiment", "dataset", "network", "train")


@dataclass(frozen=True)
class CifarSource:
    variant: str
    train_path: str
    test_path: str
    seed: int = 0       # unused; uniform interface with generated datasets


@dataclass(frozen=True)
class FileSource:
    train_path: str
    test_path: str
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    name: str
    input_shape: tuple
    layers: tuple
    discovery_layer: int
    neuron_groups: GroupSpec | None
    train: TrainConfig
    dataset: object
    out_dir: str
    control: bool
    holdout: bool
    workers: int
    preset_name: str | None = None

    @property
    def seed(self) -> int:
        return self.train.seed

    def network_layers(self) -> tuple:
        """The layer stack with the control substitution applied."""
        if not self.control:
            return self.layers
        return tuple(
            LayerSpec("identity", {}) if spec.kind == "gsmax" else spec
            for spec in self.layers
        )


class _Locator:
    """Maps (section, option) back to a line in the source file."""

    def __init__(self, path, text: str):
        self.path = str(path)
        self.lines = {}
        section = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith(("#", ";")):
                continue
            m = re.match(r"\[(.+)\]$", line)
            if m:
                section = m.group(1).strip()
                self.lines.setdefault((section, None), lineno)
                continue
            if raw[:1].isspace():
                continue            # continuation of a multi-line value
            m = re.match(r"([^=:]+)[=:]", line)
            if m and section is not None:
                option = m.group(1).strip().lower()
                self.lines.setdefault((section, option), lineno)

    def where(self, section: str, option: str | None = None) -> str:
        lineno = self.lines.get((section, option)) or self.lines.get((section, None))
        if lineno is None:
            return self.path
        return f"{self.path}:{lineno}"


class _Section:
    """One section with typed getters and strict key accounting."""

    def __init__(self, locator: _Locator, name: str, options: dict):
        self.locator = locator
        self.name = name
        self.options = dict(options)
        self.seen = set()

    def error(self, option: str | None, message: str) -> ConfigError:
        where = self.locator.where(self.name, option)
        label = f"[{self.name}] {option}" if option else f"[{self.name}]"
        return ConfigError(f"{where}: {label}: {message}")

    def has(self, option: str) -> bool:
        return option in self.options

    def raw(self, option: str, default=None):
        self.seen.add(option)
        if option not in self.options:
            if default is _REQUIRED:
                raise self.error(None, f"missing required option {option!r}")
            return default
        return self.options[option]

    def get_str(self, option: str, default=None) -> str:
        value = self.raw(option, default)
        return value if value is default else value.strip()

    def get_int(self, option: str, default=None) -> int:
        value = self.raw(option, default)
        if value is default:
            return value
        try:
            return int(value)
        except ValueError:
            raise self.error(option, f"expected an integer, got {value!r}") from None

    def get_float(self, option: str, default=None) -> float:
        value = self.raw(option, default)
        if value is default:
            return value
        try:
            return float(value)
        except ValueError:
            raise self.error(option, f"expected a number, got {value!r}") from None

    def get_bool(self, option: str, default=None) -> bool:
        value = self.raw(option, default)
        if value is default:
            return value
        lowered = value.strip().lower()
        if lowered in ("true", "yes", "on", "1"):
            return True
        if lowered in ("false", "no", "off", "0"):
            return False
        raise self.error(option, f"expected true/false, got {value!r}")

    def get_int_tuple(self, option: str, default=None) -> tuple:
        value = self.raw(option, default)
        if value is default:
            return value
        try:
            return tuple(int(tok) for tok in value.split(","))
        except ValueError:
            raise self.error(
                option, f"expected comma-separated integers, got {value!r}") from None

    def reject_unknown(self) -> None:
        extras = sorted(set(self.options) - self.seen)
        if extras:
            raise self.error(extras[0], "unknown option")


_REQUIRED = object()


def _parse_value(token: str):
    if "," in token:
        try:
            return tuple(int(t) for t in token.split(","))
        except ValueError:
            pass
    for caster in (int, float):
        try:
            return caster(token)
        except ValueError:
            continue
    lowered = token.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    return token


def parse_layer_line(line: str) -> LayerSpec:
    """One layer: ``kind key=value key=value ...``."""
    tokens = line.split()
    kind = tokens[0]
    params = {}
    for token in tokens[1:]:
        if "=" not in token:
            raise ConfigError(f"layer parameter {token!r} is not key=value")
        key, _, raw = token.partition("=")
        if key == "groups":
            key = "group_sizes"
        value = _parse_value(raw)
        if key == "group_sizes" and isinstance(value, int):
            value = (value,)
        params[key] = value
    return LayerSpec(kind, params)


def parse_layers(text: str) -> tuple:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise ConfigError("empty layer list")
    return tuple(parse_layer_line(line) for line in lines)


def _parse_dataset(sec: _Section, seed: int):
    kind = sec.get_str("kind", _REQUIRED)
    if kind == "synthetic":
        spec = SyntheticSpec(
            n_supers=sec.get_int("n_supers", _REQUIRED),
            subs_per_super=sec.get_int_tuple("subs_per_super", _REQUIRED),
            dim=sec.get_int("dim", _REQUIRED),
            super_separation=sec.get_float("super_separation", _REQUIRED),
            sub_separation=sec.get_float("sub_separation", _REQUIRED),
            noise_sigma=sec.get_float("noise_sigma", _REQUIRED),
            n_train_per_sub=sec.get_int("n_train_per_sub", _REQUIRED),
            n_test_per_sub=sec.get_int("n_test_per_sub", _REQUIRED),
            seed=sec.get_int("seed", seed),
        )
    elif kind == "rotated_edges":
        spec = RotatedEdgesSpec(
            n_train_per_orbit=sec.get_int("n_train_per_orbit", _REQUIRED),
            n_test_per_orbit=sec.get_int("n_test_per_orbit", _REQUIRED),
            patch_size=sec.get_int("patch_size", _REQUIRED),
            noise_sigma=sec.get_float("noise_sigma", _REQUIRED),
            seed=sec.get_int("seed", seed),
        )
    elif kind in ("cifar10", "cifar100"):
        spec = CifarSource(
            variant=kind,
            train_path=sec.get_str("train_path", _REQUIRED),
            test_path=sec.get_str("test_path", _REQUIRED),
        )
    elif kind == "file":
        spec = FileSource(
            train_path=sec.get_str("train_path", _REQUIRED),
            test_path=sec.get_str("test_path", _REQUIRED),
        )
    else:
        raise sec.error("kind", f"unknown dataset kind {kind!r}")
    sec.reject_unknown()
    return spec


def _groups_from_layer(spec: LayerSpec) -> GroupSpec | None:
    params = spec.params
    if "group_sizes" in params:
        return GroupSpec.from_sizes(list(params["group_sizes"]))
    if "groups" in params:
        value = params["groups"]
        if isinstance(value, GroupSpec):
            return value
        return GroupSpec(value)
    return None


def _validate_network(input_shape, layers, where: str) -> None:
    try:
        Network.from_specs(input_shape, layers, Rng(0))
    except GsmaxError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{where}: invalid network: {exc}") from exc


def load_config(path, seed: int | None = None, out_dir: str | None = None,
                control: bool | None = None, holdout: bool | None = None,
                workers: int | None = None) -> RunConfig:
    """Parse and fully validate one run configuration.

    The keyword arguments are command-line overrides and win over the
    file; booleans only force True (flags cannot unset file settings).
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    locator = _Locator(path, text)
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    unknown = set(parser.sections()) - set(_SECTIONS)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"{locator.where(name)}: unknown section [{name}]")

    sections = {
        name: _Section(locator, name, dict(parser.items(name)))
        for name in parser.sections()
    }

    exp = sections.get("experiment", _Section(locator, "experiment", {}))
    preset_name = exp.get_str("preset")
    preset: Preset | None = None
    if preset_name is not None:
        try:
            preset = get_preset(preset_name)
        except ConfigError as exc:
            raise exp.error("preset", str(exc)) from exc

    # read every file option (marking it as seen) before applying overrides
    file_seed = exp.get_int("seed", preset.train.seed if preset else 0)
    resolved_seed = seed if seed is not None else file_seed

    name = exp.get_str("name", preset_name)
    if name is None:
        raise exp.error(None, "an experiment name (or a preset) is required")

    file_out = exp.get_str("out_dir", f"runs/{name}")
    resolved_out = out_dir if out_dir is not None else file_out
    resolved_control = exp.get_bool("control", False) or bool(control)
    resolved_holdout = exp.get_bool("holdout", False) or bool(holdout)
    file_workers = exp.get_int("workers", 1)
    resolved_workers = workers if workers is not None else file_workers
    if resolved_workers < 1:
        raise exp.error("workers", f"must be >= 1, got {resolved_workers}")
    exp.reject_unknown()

    if "network" in sections:
        net = sections["network"]
        input_shape = net.get_int_tuple("input", _REQUIRED)
        layers_text = net.raw("layers", _REQUIRED)
        try:
            layers = parse_layers(layers_text)
        except ConfigError as exc:
            raise net.error("layers", str(exc)) from exc
        if net.has("discovery_layer"):
            discovery_layer = net.get_int("discovery_layer", _REQUIRED)
        else:
            try:
                discovery_layer = find_discovery_layer(layers)
            except ConfigError as exc:
                raise net.error("layers", str(exc)) from exc
        explicit_groups = net.get_int_tuple("groups")
        net.reject_unknown()
    elif preset is not None:
        input_shape = preset.input_shape
        layers = preset.layers
        discovery_layer = preset.discovery_layer
        if discovery_layer is None:
            discovery_layer = find_discovery_layer(layers)
        explicit_groups = None
    else:
        raise ConfigError(
            f"{locator.where('experiment')}: a [network] section or a preset "
            "is required")

    if not 0 <= discovery_layer < len(layers):
        where = locator.where("network", "discovery_layer")
        raise ConfigError(
            f"{where}: [network] discovery_layer: index {discovery_layer} out "
            f"of range for {len(layers)} layers")

    if explicit_groups is not None:
        neuron_groups = GroupSpec.from_sizes(list(explicit_groups))
    elif preset is not None and "network" not in sections:
        neuron_groups = preset.neuron_groups
    else:
        neuron_groups = _groups_from_layer(layers[discovery_layer])

    where = locator.where("network", "layers") if "network" in sections else str(path)
    try:
        _validate_network(input_shape, layers, where)
    except GsmaxError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: invalid network: {exc}") from exc

    base_train = preset.train if preset is not None else TrainConfig(
        base_lr=0.1, epochs=0, batch_size=32, seed=0)
    if "train" in sections:
        sec = sections["train"]
        try:
            train = TrainConfig(
                base_lr=sec.get_float("base_lr", base_train.base_lr),
                epochs=sec.get_int("epochs", base_train.epochs),
                batch_size=sec.get_int("batch_size", base_train.batch_size),
                seed=resolved_seed,
                lr_decay_factor=sec.get_float(
                    "lr_decay_factor", base_train.lr_decay_factor),
                lr_decay_every_epochs=sec.get_int(
                    "lr_decay_every_epochs", base_train.lr_decay_every_epochs),
                momentum=sec.get_float("momentum", base_train.momentum),
                weight_decay=sec.get_float(
                    "weight_decay", base_train.weight_decay),
            )
        except ValueError as exc:
            raise sec.error(None, str(exc)) from exc
        sec.reject_unknown()
    else:
        train = replace(base_train, seed=resolved_seed)

    if "dataset" in sections:
        sec = sections["dataset"]
        try:
            dataset = _parse_dataset(sec, resolved_seed)
        except ConfigError:
            raise
        except GsmaxError as exc:
            raise sec.error(None, str(exc)) from exc
    elif preset is not None and preset.dataset is not None:
        dataset = replace(preset.dataset, seed=resolved_seed)
    else:
        raise ConfigError(
            f"{path}: a [dataset] section is required (the preset supplies "
            "none)")

    return RunConfig(
        name=name,
        input_shape=tuple(input_shape),
        layers=layers,
        discovery_layer=discovery_layer,
        neuron_groups=neuron_groups,
        train=train,
        dataset=dataset,
        out_dir=resolved_out,
        control=resolved_control,
        holdout=resolved_holdout,
        workers=resolved_workers,
        preset_name=preset_name,
    )
