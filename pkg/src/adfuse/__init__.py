"""adfuse: multimodal multitask ad understanding on precomputed features.

A shared bottom (global-feature MLP, object autoencoder, word BLSTM) feeds
two hierarchical attention modules and two sigmoid multi-label heads that
jointly predict topics and sentiments. All forward and backward passes are
written out by hand on numpy arrays and verified against central finite
differences.
"""

from .data import DatasetHeader, FeatureRecord, SynthConfig, batches, load_dataset, save_dataset, split, synth_generate
from .errors import AdfuseError, ConfigError, DataError, NumericError, ParseError, ShapeError, UsageError
from .metrics import MetricsReport, average_precision, evaluate_predictions, f1_scores, mean_average_precision
from .model import ModalBundle, Model, ModelConfig, build, predict
from .numerics import Rng
from .training import (
    Adamax,
    LossWeights,
    Schedule,
    TrainResult,
    fit,
    gradcheck_attention,
    gradcheck_full,
    gradcheck_layers,
    gradient_check,
    load_checkpoint,
    loss_ml,
    loss_multitask,
    loss_share,
    predict_scores,
    save_checkpoint,
    train_epoch,
)

__version__ = "0.1.0"
