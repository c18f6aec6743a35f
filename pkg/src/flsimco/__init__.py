"""Deterministic federated contrastive-learning simulator.

Vehicles with truncated-Gaussian speeds train a small contrastive encoder
on motion-blurred image shards; a roadside aggregator combines the local
models with blur-dependent weights, next to plain-averaging, discard, and
shared-queue baselines.
"""

from .data import Dataset, PartitionSpec, Shard
from .federation import ExperimentConfig, RoundConfig, RoundRecord, VehicleState
from .imaging import CameraParams
from .mobility import MobilityParams
from .ssl import DtLossConfig, EncoderConfig, ParamVector, SgdConfig

__all__ = [
    "CameraParams", "Dataset", "DtLossConfig", "EncoderConfig", "ExperimentConfig",
    "MobilityParams", "ParamVector", "PartitionSpec", "RoundConfig", "RoundRecord",
    "SgdConfig", "Shard", "VehicleState",
]

__version__ = "0.1.0"
