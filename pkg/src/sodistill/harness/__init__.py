"""Training, prediction, benchmark tables and ablation presets."""
from .ablation import PRESETS, AblationError, AblationResult, ablation, preset_arms
from .config import TOY_CONFIG, TrainConfig, lr_at, read_config, write_config
from .report import ComparisonTable, ReportMismatch, build_report, compare, load_eval_report
from .training import TrainingError, TrainResult, predict, predict_array, train

__all__ = [
    "PRESETS", "AblationError", "AblationResult", "ablation", "preset_arms",
    "TOY_CONFIG", "TrainConfig", "lr_at", "read_config", "write_config",
    "ComparisonTable", "ReportMismatch", "build_report", "compare", "load_eval_report",
    "TrainingError", "TrainResult", "predict", "predict_array", "train",
]
