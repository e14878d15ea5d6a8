"""Single-depth-map 3D shape completion with a block auto-encoder, in numpy."""

from .codec import AutoEncoder, assemble, compression_ratio, partition
from .dataset import SampleStore, build_dataset, build_procedural, read_store, write_store
from .geometry import TriangleMesh, Viewpoint, load_off, normalize_mesh, render_depth, voxelize
from .metrics import EvalReport, evaluate, iou, voxel_accuracy
from .model import HIGH_RES, LOW_RES, CompletionModel
from .checkpoint import load_checkpoint, save_checkpoint
from .training import TrainConfig, finetune, train_autoencoder, train_completion, train_low_res

__version__ = "0.1.0"

__all__ = [
    "AutoEncoder", "assemble", "compression_ratio", "partition",
    "SampleStore", "build_dataset", "build_procedural", "read_store", "write_store",
    "TriangleMesh", "Viewpoint", "load_off", "normalize_mesh", "render_depth", "voxelize",
    "EvalReport", "evaluate", "iou", "voxel_accuracy",
    "HIGH_RES", "LOW_RES", "CompletionModel",
    "load_checkpoint", "save_checkpoint",
    "TrainConfig", "finetune", "train_autoencoder", "train_completion", "train_low_res",
]
