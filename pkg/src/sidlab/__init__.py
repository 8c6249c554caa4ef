"""Iterative denoising samplers for categorical graph generation.

Library layout:

* ``rng``, ``dists``, ``schedule``: deterministic streams, categorical
  distributions, noise schedules.
* ``graphs``, ``families``: graph instances, toy families, enumeration,
  dataset generation, JSONL persistence.
* ``noising``: element/graph corruption and the transition-matrix view.
* ``denoiser``, ``oracle``, ``mpnn``: the clean-posterior models (exact,
  tabular, message passing) and training.
* ``critic``: keep-probability models and critic-guided sampling.
* ``samplers``: the step rules and the generation loop.
* ``metrics``, ``harness``, ``plotting``, ``verify``, ``cli``: evaluation,
  experiment orchestration, report figures, the property-check suite.
"""

from .dists import CategoricalDist, mix, sample_categorical
from .graphs import CorruptionMask, GraphInstance, GraphSchema, element_count
from .families import ToyFamily, enumerate_family, generate_dataset, is_valid, toy_molecule, triangle_free_4
from .noising import NoiseSpec, TransitionMatrix, compose_forward, forward_transition_matrix
from .rng import RngStream
from .schedule import Schedule, cosine_alpha

__all__ = [
    "CategoricalDist",
    "CorruptionMask",
    "GraphInstance",
    "GraphSchema",
    "NoiseSpec",
    "RngStream",
    "Schedule",
    "ToyFamily",
    "TransitionMatrix",
    "compose_forward",
    "cosine_alpha",
    "element_count",
    "enumerate_family",
    "forward_transition_matrix",
    "generate_dataset",
    "is_valid",
    "mix",
    "sample_categorical",
    "toy_molecule",
    "triangle_free_4",
]

__version__ = "0.1.0"
