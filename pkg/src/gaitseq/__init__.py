"""Gait anomaly detection from phone inertial data and video-derived head angles."""

from .autoencoder import Seq2SeqEncoder
from .cnn import StateCNNClassifier
from .config import PipelineConfig, load_config
from .cycles import CycleStandardizer, EventConfig, GaitCycle, NormStats, detect_events, extract_cycles
from .dataset import ModelBundle, build_dataset, read_cycles, write_cycles
from .exceptions import GaitSeqError
from .protocol import EvalReport, SplitSpec, report, run_protocol, split
from .svm import SMOClassifier
from .synth import generate_synthetic, synth_walk

__version__ = "0.1.0"

__all__ = [
    "CycleStandardizer",
    "EvalReport",
    "EventConfig",
    "GaitCycle",
    "GaitSeqError",
    "ModelBundle",
    "NormStats",
    "PipelineConfig",
    "SMOClassifier",
    "Seq2SeqEncoder",
    "SplitSpec",
    "StateCNNClassifier",
    "build_dataset",
    "detect_events",
    "extract_cycles",
    "generate_synthetic",
    "load_config",
    "read_cycles",
    "report",
    "run_protocol",
    "split",
    "synth_walk",
    "write_cycles",
]
