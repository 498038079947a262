"""Robust subspace recovery layer for autoencoder anomaly detection."""

from .data import LabeledDataset, corrupted_swiss_roll, gaussian_outliers, load_csv, swiss_roll
from .gaussian import Gaussian, best_rank_d_gaussian, gaussian_w2, project_gaussian
from .linear import Subspace, fms, pca_subspace, principal_angle, sfms, train_linear_ae
from .losses import anomaly_scores, loss_ae, loss_combined, loss_rsr1, loss_rsr2
from .metrics import ScoreReport, average_precision, roc_auc
from .net import AutoencoderModel, ModelSpec, init_model, load_model, model_forward, save_model
from .optim import TrainConfig, train, train_plain_ae, train_rsrae, train_rsrae_plus
from .tensor import Tape, finite_difference_gradient

__all__ = [
    "AutoencoderModel", "Gaussian", "LabeledDataset", "ModelSpec", "ScoreReport", "Subspace", "Tape",
    "TrainConfig", "anomaly_scores", "average_precision", "best_rank_d_gaussian", "corrupted_swiss_roll",
    "finite_difference_gradient", "fms", "gaussian_outliers", "gaussian_w2", "init_model", "load_csv",
    "load_model", "loss_ae", "loss_combined", "loss_rsr1", "loss_rsr2", "model_forward", "pca_subspace",
    "principal_angle", "project_gaussian", "roc_auc", "save_model", "sfms", "swiss_roll", "train",
    "train_linear_ae", "train_plain_ae", "train_rsrae", "train_rsrae_plus",
]
