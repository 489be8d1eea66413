"""Train a U-Net on exported grid datasets and serve it as a policy."""

from .data import DatasetError, MetaMismatch, SampleDataset, iter_records, pad_sample, read_meta
from .train import TrainConfig, load_checkpoint, save_checkpoint, train
from .unet import ShapeReport, UNet, UNetSpec, count_parameters, shape_check

__version__ = "0.1.0"

__all__ = [
    "DatasetError",
    "MetaMismatch",
    "SampleDataset",
    "ShapeReport",
    "TrainConfig",
    "UNet",
    "UNetSpec",
    "count_parameters",
    "iter_records",
    "load_checkpoint",
    "pad_sample",
    "read_meta",
    "save_checkpoint",
    "shape_check",
    "train",
]
