"""ResUNet guess-network training and ONNX export."""

from .data import PairDataset, TrainingSet, load_manifest, load_png
from .onnx_export import export_resunet
from .resunet import ResUNet, ResUNetSpec, build_resunet
from .train import TrainingRun, train_all, train_guess_network

__version__ = "0.1.0"

__all__ = [
    "PairDataset",
    "ResUNet",
    "ResUNetSpec",
    "TrainingRun",
    "TrainingSet",
    "build_resunet",
    "export_resunet",
    "load_manifest",
    "load_png",
    "train_all",
    "train_guess_network",
    "__version__",
]
