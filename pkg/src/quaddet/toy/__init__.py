"""Desk-scale trainer on synthetic oriented-rectangle scenes."""

from .scenes import TOY_CLASSES, SyntheticScene, generate_scene, make_rng
from .model import ToyModel
from .train import TrainConfig, TrainResult, train, evaluate_model
from .experiments import capacity_sweep, run_comparison

__all__ = [
    "TOY_CLASSES", "SyntheticScene", "generate_scene", "make_rng", "ToyModel",
    "TrainConfig", "TrainResult", "train", "evaluate_model", "capacity_sweep", "run_comparison",
]
