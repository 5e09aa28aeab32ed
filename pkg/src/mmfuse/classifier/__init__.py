from .config import (
    LR_SCHEDULES,
    NORMALIZATIONS,
    POOLINGS,
    POSITIONAL_ENCODINGS,
    ClassifierConfig,
)
from .model import MAX_SEQ_LEN, TransformerClassifier
from .train import (
    SequenceDataset,
    TrainHistory,
    dataset_log_loss,
    load_checkpoint,
    pad_batch,
    predict,
    save_checkpoint,
    train,
)

__all__ = [
    "ClassifierConfig",
    "TransformerClassifier",
    "SequenceDataset",
    "TrainHistory",
    "train",
    "predict",
    "pad_batch",
    "dataset_log_loss",
    "save_checkpoint",
    "load_checkpoint",
    "MAX_SEQ_LEN",
    "POOLINGS",
    "POSITIONAL_ENCODINGS",
    "NORMALIZATIONS",
    "LR_SCHEDULES",
]
