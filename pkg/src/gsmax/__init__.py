"""Competitive group-sparse activations, the Boltzmann machine they are
the exact posterior of, and tools for discovering sub-class structure in
networks trained with only coarse labels."""

__version__ = "0.1.0"

from .activation import (
    ground_state_prob,
    group_maxout_backward,
    group_maxout_forward,
    gsmax_backward,
    gsmax_forward,
)
from .boltzmann import (
    NEG_INFINITY,
    BoltzmannMachine,
    enumerate_posterior,
    gibbs_sample,
    load_machine,
    save_machine,
    tv_distance,
)
from .groups import GroupSpec
from .rng import Rng

__all__ = [
    "BoltzmannMachine",
    "GroupSpec",
    "NEG_INFINITY",
    "Rng",
    "enumerate_posterior",
    "gibbs_sample",
    "ground_state_prob",
    "group_maxout_backward",
    "group_maxout_forward",
    "gsmax_backward",
    "gsmax_forward",
    "load_machine",
    "save_machine",
    "tv_distance",
]
