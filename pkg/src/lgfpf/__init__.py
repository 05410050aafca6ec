"""Feedback particle filter on the rotation groups SO(2) and SO(3)."""

__version__ = "0.1.0"

from .basis import BasisId
from .filter import FilterModel, GainConfig, ParticleEnsemble, Representation, run_filter, step
from .galerkin import assemble, gain_at, solve_gain
from .lie import GroupElement, GroupError, GroupTag, UnitQuaternion

__all__ = [
    "BasisId",
    "FilterModel",
    "GainConfig",
    "GroupElement",
    "GroupError",
    "GroupTag",
    "ParticleEnsemble",
    "Representation",
    "UnitQuaternion",
    "__version__",
    "assemble",
    "gain_at",
    "run_filter",
    "solve_gain",
    "step",
]
