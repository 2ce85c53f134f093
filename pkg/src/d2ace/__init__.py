"""Dual-dynamics, correlation-enhanced mini-batch selection for multi-label
training, with baseline selectors, a compact MLP trainer, evaluation
metrics, and a statistical verification suite."""

from .datasets import (FoldAssignment, MultiLabelDataset, load_arff, load_csv,
                       stratify_folds)
from .experiment import RunConfig, RunManifest, compare, make_synthetic, run
from .linalg import RandomStream, SparseBinaryMatrix, knn_bruteforce
from .metrics import evaluate, macro_auc, macro_f1, mean_average_precision, ranking_loss
from .mlp import AdamState, LrSchedule, MlpModel, bce_loss_matrix
from .sampling import (SamplingSchedule, draw_batch, mixing_coefficient,
                       mixture_distribution, quantization_index,
                       selection_pressure, weight_to_probability)
from .selectors import SELECTOR_KINDS, SelectorConfig, build_selector
from .tracking import PredictionHistory, binary_entropy, compute_hardness, compute_uncertainty
from .verify import run_all as run_verification
from .weighting import (cosine_correlation, correlation_enhance, finalize_weights,
                        label_stats, local_appearance, masked_metric,
                        mlunc_degenerate_weights, weighting_pipeline)

__version__ = "0.1.0"

__all__ = [
    "FoldAssignment", "MultiLabelDataset", "load_arff", "load_csv", "stratify_folds",
    "RunConfig", "RunManifest", "compare", "make_synthetic", "run",
    "RandomStream", "SparseBinaryMatrix", "knn_bruteforce",
    "evaluate", "macro_auc", "macro_f1", "mean_average_precision", "ranking_loss",
    "AdamState", "LrSchedule", "MlpModel", "bce_loss_matrix",
    "SamplingSchedule", "draw_batch", "mixing_coefficient", "mixture_distribution",
    "quantization_index", "selection_pressure", "weight_to_probability",
    "SELECTOR_KINDS", "SelectorConfig", "build_selector",
    "PredictionHistory", "binary_entropy", "compute_hardness", "compute_uncertainty",
    "run_verification",
    "cosine_correlation", "correlation_enhance", "finalize_weights", "label_stats",
    "local_appearance", "masked_metric", "mlunc_degenerate_weights",
    "weighting_pipeline",
]
