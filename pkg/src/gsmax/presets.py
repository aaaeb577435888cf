"""Canonical experiment configurations.

Each preset bundles a network, its grouping for concept discovery, the
training schedule, and (where one exists) a built-in dataset recipe, so
a run needs nothing beyond a preset name and a seed.  The control
variant of any network swaps every grouped-softmax activation for an
identity layer while keeping the architecture, schedule, and grouping
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .data import RotatedEdgesSpec, SyntheticSpec
from .errors import ConfigError
from .groups import GroupSpec
from .layers import LayerSpec
from .network import TrainConfig


@dataclass(frozen=True)
class Preset:
    name: str
    input_shape: tuple
    layers: tuple
    train: TrainConfig
    neuron_groups: GroupSpec | None = None   # grouping of the discovery layer
    discovery_layer: int | None = None       # index into layers
    dataset: object | None = None            # SyntheticSpec | RotatedEdgesSpec | None

    def control_layers(self) -> tuple:
        """The same stack with grouped-softmax activations disabled."""
        return tuple(
            LayerSpec("identity", {}) if spec.kind == "gsmax" else spec
            for spec in self.layers
        )


def find_discovery_layer(layer_specs) -> int:
    """Index of the activation whose per-neuron outputs are dumped for
    association: the last gsmax, or the identity standing in for one."""
    for i in range(len(layer_specs) - 1, -1, -1):
        if layer_specs[i].kind in ("gsmax", "identity"):
            return i
    raise ConfigError("no gsmax (or identity stand-in) layer to discover from")


def synthetic_default() -> Preset:
    """Four well-separated super-classes of three sub-clusters each in
    32 dimensions; one hidden block of twelve competing neurons in four
    pools of three, trained on super-class labels alone."""
    groups = GroupSpec.from_sizes([3, 3, 3, 3])
    layers = (
        LayerSpec("dense", {"units": 64}),
        LayerSpec("relu", {}),
        LayerSpec("dense", {"units": 12}),
        LayerSpec("gsmax", {"group_sizes": (3, 3, 3, 3), "temperature": 0.5}),
        LayerSpec("group_maxout", {"group_sizes": (3, 3, 3, 3)}),
        LayerSpec("softmax_xent_head", {}),
    )
    return Preset(
        name="synthetic_default",
        input_shape=(32,),
        layers=layers,
        train=TrainConfig(
            base_lr=1.0,
            epochs=50,
            batch_size=32,
            seed=0,
            lr_decay_factor=0.1,
            lr_decay_every_epochs=25,
            momentum=0.5,
            weight_decay=1e-4,
        ),
        neuron_groups=groups,
        discovery_layer=3,
        dataset=SyntheticSpec(
            n_supers=4,
            subs_per_super=(3, 3, 3, 3),
            dim=32,
            super_separation=10.0,
            sub_separation=4.0,
            noise_sigma=1.0,
            n_train_per_sub=300,
            n_test_per_sub=150,
            seed=0,
        ),
    )


def rotated_edges() -> Preset:
    """Edge prototypes under quarter rotations; four first-layer filters
    in two pools of two, so each pool must split one prototype's orbit."""
    layers = (
        LayerSpec("dense", {"units": 4}),
        LayerSpec("gsmax", {"group_sizes": (2, 2), "temperature": 0.5}),
        LayerSpec("group_maxout", {"group_sizes": (2, 2)}),
        LayerSpec("softmax_xent_head", {}),
    )
    return Preset(
        name="rotated_edges",
        input_shape=(25,),
        layers=layers,
        train=TrainConfig(
            base_lr=0.5,
            epochs=20,
            batch_size=16,
            seed=0,
            lr_decay_factor=0.1,
            lr_decay_every_epochs=25,
            momentum=0.5,
            weight_decay=0.0,
        ),
        neuron_groups=GroupSpec.from_sizes([2, 2]),
        discovery_layer=1,
        dataset=RotatedEdgesSpec(
            n_train_per_orbit=40,
            n_test_per_orbit=10,
            patch_size=5,
            noise_sigma=0.25,
            seed=0,
        ),
    )


def conv_reference() -> Preset:
    """Large convolutional stack for 32x32 color images.

    Channel counts follow the classic three-block maxout network, with
    the second block widened from 384 to 385 so the grouping [2, 11, 8,
    50] divides each activation width; activations sit after pooling,
    dropout keeps 0.8 of the input and 0.5 elsewhere.
    """
    layers = (
        LayerSpec("dropout", {"keep": 0.8}),
        LayerSpec("conv2d", {"out_channels": 192, "kernel": 8, "padding": "same"}),
        LayerSpec("maxpool2d", {"kernel": 4, "stride": 2}),
        LayerSpec("gsmax", {"group_sizes": (2,) * 96, "temperature": 0.5}),
        LayerSpec("dropout", {"keep": 0.5}),
        LayerSpec("conv2d", {"out_channels": 385, "kernel": 8, "padding": "same"}),
        LayerSpec("maxpool2d", {"kernel": 4, "stride": 2}),
        LayerSpec("gsmax", {"group_sizes": (11,) * 35, "temperature": 0.5}),
        LayerSpec("dropout", {"keep": 0.5}),
        LayerSpec("conv2d", {"out_channels": 384, "kernel": 8, "padding": "same"}),
        LayerSpec("maxpool2d", {"kernel": 2, "stride": 2}),
        LayerSpec("gsmax", {"group_sizes": (8,) * 48, "temperature": 0.5}),
        LayerSpec("dropout", {"keep": 0.5}),
        LayerSpec("dense", {"units": 2500}),
        LayerSpec("gsmax", {"group_sizes": (50,) * 50, "temperature": 0.5}),
        LayerSpec("dropout", {"keep": 0.5}),
        LayerSpec("dense", {"units": 10}),
        LayerSpec("softmax_xent_head", {}),
    )
    return Preset(
        name="conv_reference",
        input_shape=(3, 32, 32),
        layers=layers,
        train=TrainConfig(
            base_lr=1.0,
            epochs=50,
            batch_size=128,
            seed=0,
            lr_decay_factor=0.1,
            lr_decay_every_epochs=25,
            momentum=0.5,
            weight_decay=1e-4,
        ),
        neuron_groups=GroupSpec.from_sizes([50] * 50),
        discovery_layer=14,
    )


PRESETS = {
    "synthetic_default": synthetic_default,
    "rotated_edges": rotated_edges,
    "conv_reference": conv_reference,
}


def get_preset(name: str, seed: int | None = None) -> Preset:
    if name not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown preset {name!r} (known: {known})")
    preset = PRESETS[name]()
    if seed is not None:
        preset = replace(preset, train=replace(preset.train, seed=seed))
        if preset.dataset is not None:
            preset = replace(preset, dataset=replace(preset.dataset, seed=seed))
    return preset
