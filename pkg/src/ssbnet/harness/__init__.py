"""Desk-scale training, evaluation, benchmarking and visualization."""

from .bench import BenchRow, bench_case, run_bench
from .config import RunConfig
from .data import augment, load_split, normalize, read_batch_file, write_batch_file
from .netpbm import read_netpbm, write_pgm, write_ppm
from .train import EpochMetrics, TrainResult, evaluate, evaluate_checkpoint, read_metrics, restore_network, train
from .visualize import Visualization, visualize, write_visualization

__all__ = [
    "BenchRow",
    "EpochMetrics",
    "RunConfig",
    "TrainResult",
    "Visualization",
    "augment",
    "bench_case",
    "evaluate",
    "evaluate_checkpoint",
    "load_split",
    "normalize",
    "read_batch_file",
    "read_metrics",
    "read_netpbm",
    "restore_network",
    "run_bench",
    "train",
    "visualize",
    "write_batch_file",
    "write_pgm",
    "write_ppm",
    "write_visualization",
]
