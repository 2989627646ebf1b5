"""Kernel-weighted nearest neighbour classification (NN, FNN, FRNN) with an evaluation harness."""

__version__ = "0.1.0"

from .classifiers import ClassifierConfig, FittedModel, WeightScheme, fit, fit_model, select_k
from .data import BUNDLED, Dataset, fit_scaler, load_bundled, load_csv, save_csv, stratified_folds
from .evaluation import auroc_binary, auroc_multiclass, compare_configs, cross_validate, holm_bonferroni, wilcoxon_one_sided
from .geometry import Dispersion, Metric, dispersion, minkowski_distance
from .kernels import Kernel, distance_weights, kernel_from_name, rank_weights, samworth_finite_weights
from .neighbours import NeighbourIndex

__all__ = [
    "BUNDLED",
    "ClassifierConfig",
    "Dataset",
    "Dispersion",
    "FittedModel",
    "Kernel",
    "Metric",
    "NeighbourIndex",
    "WeightScheme",
    "auroc_binary",
    "auroc_multiclass",
    "compare_configs",
    "cross_validate",
    "dispersion",
    "distance_weights",
    "fit",
    "fit_model",
    "fit_scaler",
    "holm_bonferroni",
    "kernel_from_name",
    "load_bundled",
    "load_csv",
    "minkowski_distance",
    "rank_weights",
    "samworth_finite_weights",
    "save_csv",
    "select_k",
    "stratified_folds",
    "wilcoxon_one_sided",
]
