from .core import ClothState, SimConfig, Simulator, SimulationFault, load_state, save_state
from .primitives import (
    CrossingArmsError,
    DegeneratePairError,
    GraspMissError,
    crumple,
    random_pick_place_init,
)
from .sensing import Observation, render_topdown_mask, sample_pointcloud

__all__ = [
    "ClothState",
    "SimConfig",
    "Simulator",
    "SimulationFault",
    "load_state",
    "save_state",
    "CrossingArmsError",
    "DegeneratePairError",
    "GraspMissError",
    "crumple",
    "random_pick_place_init",
    "Observation",
    "render_topdown_mask",
    "sample_pointcloud",
]
