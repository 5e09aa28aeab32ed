"""Training loop: AdamW, LR schedules, early stopping on validation log loss,
checkpoints. Everything is a pure function of (config, data): shuffling and
dropout randomness come from the config seed."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .._kernels import impl as K
from ..errors import ArgumentError, FormatError, TrainingError
from .config import STEP_DECAY_EVERY, STEP_DECAY_FACTOR, ClassifierConfig
from .model import TransformerClassifier, truncate_sequence

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_VERSION = 1


@dataclass
class SequenceDataset:
    ids: list[str]
    sequences: list[np.ndarray]  # one [T_i, D] matrix per recording
    labels: np.ndarray  # int class indices, aligned with sequences

    def __post_init__(self):
        if not (len(self.ids) == len(self.sequences) == len(self.labels)):
            raise ArgumentError("ids, sequences and labels must have equal lengths")

    def __len__(self) -> int:
        return len(self.sequences)

    def subset(self, indices) -> "SequenceDataset":
        return SequenceDataset(
            ids=[self.ids[i] for i in indices],
            sequences=[self.sequences[i] for i in indices],
            labels=self.labels[np.asarray(indices, dtype=int)],
        )


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
        }


def pad_batch(sequences: list[np.ndarray], dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length sequences into [B, Tmax, D] plus a validity mask."""
    if not sequences:
        raise ArgumentError("empty batch")
    seqs = [truncate_sequence(np.asarray(s, dtype=dtype)) for s in sequences]
    d = seqs[0].shape[1]
    tmax = max(s.shape[0] for s in seqs)
    x = np.zeros((len(seqs), tmax, d), dtype=dtype)
    mask = np.zeros((len(seqs), tmax), dtype=bool)
    for i, s in enumerate(seqs):
        if s.shape[1] != d:
            raise ArgumentError(f"inconsistent widths in batch: {s.shape[1]} vs {d}")
        x[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = True
    return x, mask


def epoch_learning_rate(cfg: ClassifierConfig, epoch: int) -> float:
    """Learning rate for a 1-based epoch index under the configured schedule."""
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    if cfg.lr_schedule == "cosine_decay":
        frac = (epoch - 1) / max(1, cfg.max_epochs)
        return cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * frac))
    return cfg.learning_rate * STEP_DECAY_FACTOR ** ((epoch - 1) // STEP_DECAY_EVERY)


def dataset_log_loss(model: TransformerClassifier, dataset: SequenceDataset) -> float:
    probs = predict(model, dataset)
    p_true = probs[np.arange(len(dataset)), dataset.labels]
    return float(-np.mean(np.log(np.clip(p_true, 1e-15, 1.0 - 1e-15))))


def train(
    model: TransformerClassifier,
    train_set: SequenceDataset,
    val_set: SequenceDataset,
) -> TrainHistory:
    """Train in place; returns the history. The model ends at the epoch with the
    lowest validation log loss."""
    cfg = model.cfg
    if len(train_set) == 0 or len(val_set) == 0:
        raise ArgumentError("train and validation sets must be non-empty")
    rng = np.random.default_rng([cfg.seed, 1])
    adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0

    history = TrainHistory()
    best_val = math.inf
    best_params = model.copy_params()
    best_epoch = 0

    n = len(train_set)
    for epoch in range(1, cfg.max_epochs + 1):
        lr = epoch_learning_rate(cfg, epoch)
        perm = rng.permutation(n)
        total_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            x, mask = pad_batch([train_set.sequences[i] for i in idx], model.dtype)
            labels = train_set.labels[idx]
            loss, grads = model.loss_and_grads(x, mask, labels, rng)
            if not math.isfinite(loss):
                raise TrainingError(f"training diverged (loss not finite) at epoch {epoch}")
            total_loss += loss * len(idx)
            step += 1
            for name, p in model.params.items():
                # Decoupled weight decay applies to weight matrices only.
                wd = cfg.weight_decay if name.endswith("_w") else 0.0
                K.adamw_update(p, grads[name], adam_m[name], adam_v[name],
                               lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, wd, step)

        train_loss = total_loss / n
        val_loss = dataset_log_loss(model, val_set)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingError(f"training diverged (loss not finite) at epoch {epoch}")
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = model.copy_params()
        history.stopped_epoch = epoch
        if epoch - best_epoch >= cfg.patience:
            break

    history.best_epoch = best_epoch
    model.load_params(best_params)
    return history


def predict(model: TransformerClassifier, dataset: SequenceDataset | list[np.ndarray]) -> np.ndarray:
    """Posteriors for every sequence, order-aligned with the input."""
    sequences = dataset.sequences if isinstance(dataset, SequenceDataset) else dataset
    if len(sequences) == 0:
        raise ArgumentError("nothing to predict")
    out = []
    bs = model.cfg.batch_size
    for lo in range(0, len(sequences), bs):
        x, mask = pad_batch(sequences[lo : lo + bs], model.dtype)
        out.append(model.predict_probs(x, mask))
    return np.concatenate(out, axis=0)


def save_checkpoint(model: TransformerClassifier, path) -> None:
    meta = {"version": CHECKPOINT_VERSION, "config": model.cfg.to_dict()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
             **model.params)


def load_checkpoint(path) -> TransformerClassifier:
    with np.load(path) as data:
        if "__meta__" not in data:
            raise FormatError(f"{path}: not an mmfuse checkpoint")
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        cfg = ClassifierConfig.from_dict(meta["config"])
        model = TransformerClassifier(cfg)
        model.load_params({k: data[k] for k in data.files if k != "__meta__"})
    return model
