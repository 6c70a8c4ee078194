"""Confidence-gated approximate autoregressive generation for 1-D time series.

A small prior predictor drafts future chunks, the base LSTM model
post-processes them in one dependent round, and a learned confidence score
decides per-position acceptance versus sequential re-sampling.
"""

from .ar import ArParams, ArState, draft_pass, next_dist, sample_next, sequence_nll, warmup
from .bundle import ModelBundle, init_bundle
from .confidence import (
    ConfParams,
    ThresholdCalibration,
    accept_prefix,
    calibrate_threshold,
    label_chunk,
    oracle_confidence,
    predict_confidence,
    train_confidence,
)
from .engine import GenerationConfig, GenerationTrace, generate_nara, generate_pure_ar
from .kernels import backend as kernel_backend
from .numeric import AdamState, DenseLayer, GaussianHead, adam_step, finite_difference_gradient, gaussian_log_density
from .priors import PriorChunk, PriorParams, predict_priors, prior_l1
from .training import SinusoidParams, TrainingConfig, joint_loss, make_sinusoids, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ArParams",
    "ArState",
    "ConfParams",
    "DenseLayer",
    "GaussianHead",
    "GenerationConfig",
    "GenerationTrace",
    "ModelBundle",
    "PriorChunk",
    "PriorParams",
    "SinusoidParams",
    "ThresholdCalibration",
    "TrainingConfig",
    "accept_prefix",
    "adam_step",
    "calibrate_threshold",
    "draft_pass",
    "finite_difference_gradient",
    "gaussian_log_density",
    "generate_nara",
    "generate_pure_ar",
    "init_bundle",
    "joint_loss",
    "kernel_backend",
    "label_chunk",
    "make_sinusoids",
    "next_dist",
    "oracle_confidence",
    "predict_confidence",
    "predict_priors",
    "prior_l1",
    "sample_next",
    "sequence_nll",
    "train",
    "train_confidence",
    "warmup",
]
