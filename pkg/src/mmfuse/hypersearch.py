"""Adaptive hyperparameter search: tree-structured Parzen estimator over the
classifier configuration space, fixed trial budget, selection by validation
log loss.

The first N_STARTUP trials sample the prior uniformly. After that, completed
trials are split at the GAMMA quantile of loss into good/bad sets; each
parameter gets a one-dimensional density for both sets (Gaussian Parzen
mixtures for continuous parameters, smoothed counts for categorical ones), and
N_CANDIDATES draws from the good density are scored by the good/bad density
ratio, keeping the best. Sampling is a pure function of (seed, history).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .classifier import ClassifierConfig
from .errors import ArgumentError, ConfigError, SearchError

N_STARTUP = 20
GAMMA = 0.25
N_CANDIDATES = 24
_MAX_RESAMPLE = 100


@dataclass(frozen=True)
class FloatParam:
    name: str
    low: float
    high: float
    log: bool = False

    def transform(self, x: float) -> float:
        return math.log(x) if self.log else x

    def untransform(self, t: float) -> float:
        return math.exp(t) if self.log else t

    def sample_prior(self, rng: np.random.Generator) -> float:
        lo, hi = self.transform(self.low), self.transform(self.high)
        return self.untransform(float(rng.uniform(lo, hi)))


@dataclass(frozen=True)
class ChoiceParam:
    name: str
    values: tuple

    def sample_prior(self, rng: np.random.Generator):
        return self.values[int(rng.integers(len(self.values)))]


SEARCH_SPACE: tuple = (
    FloatParam("learning_rate", 1e-5, 1e-2, log=True),
    ChoiceParam("num_layers", (1, 2, 3, 4)),
    ChoiceParam("num_heads", (2, 4, 8)),
    ChoiceParam("hidden_dim", (64, 128, 256, 512)),
    FloatParam("dropout", 0.0, 0.5),
    FloatParam("weight_decay", 1e-6, 1e-2, log=True),
    ChoiceParam("batch_size", (8, 16, 32)),
    ChoiceParam("use_projection", (False, True)),
    ChoiceParam("projection_dim", (128, 256, 512)),
    ChoiceParam("pooling", ("mask_weighted_mean", "learnable_attention")),
    ChoiceParam("positional_encoding", ("sinusoidal", "learned", "none")),
    ChoiceParam("normalization", ("pre_norm", "post_norm")),
    ChoiceParam("lr_schedule", ("constant", "cosine_decay", "step_decay")),
)


@dataclass
class TrialRecord:
    trial_id: int
    config: dict
    loss: float
    status: str  # completed | failed

    def to_json(self) -> str:
        return json.dumps(
            {"trial_id": self.trial_id, "config": self.config, "loss": self.loss, "status": self.status},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        d = json.loads(line)
        return cls(d["trial_id"], d["config"], float(d["loss"]), d["status"])


def _parzen_components(points: np.ndarray, low_t: float, high_t: float):
    """Mixture centers and bandwidths for observed points plus one wide prior
    component at the domain midpoint.

    Per-point bandwidths come from neighbor spacing (domain edges act as
    virtual neighbors) clipped below at span / min(100, 1 + n). A collection
    of near-identical points therefore keeps a usable exploration width
    instead of collapsing to a delta spike."""
    span = high_t - low_t
    n = len(points)
    centers = np.append(points, 0.5 * (low_t + high_t))
    widths = np.empty(n + 1)
    if n:
        order = np.argsort(points)
        sorted_pts = points[order]
        padded = np.concatenate([[low_t], sorted_pts, [high_t]])
        gaps = np.maximum(padded[2:] - padded[1:-1], padded[1:-1] - padded[:-2])
        floor = span / min(100.0, 1.0 + n)
        widths[order] = np.clip(gaps, floor, span)
    widths[-1] = span
    return centers, widths


def _parzen_pdf(x: float, centers: np.ndarray, widths: np.ndarray) -> float:
    z = (x - centers) / widths
    dens = np.exp(-0.5 * z * z) / (widths * math.sqrt(2.0 * math.pi))
    return float(dens.mean())


def _sample_float_tpe(
    param: FloatParam, good: np.ndarray, bad: np.ndarray, rng: np.random.Generator
) -> float:
    lo, hi = param.transform(param.low), param.transform(param.high)
    g_centers, g_widths = _parzen_components(good, lo, hi)
    b_centers, b_widths = _parzen_components(bad, lo, hi)
    best_x, best_ratio = None, -math.inf
    for _ in range(N_CANDIDATES):
        c = int(rng.integers(len(g_centers)))
        x = float(np.clip(rng.normal(g_centers[c], g_widths[c]), lo, hi))
        ratio = _parzen_pdf(x, g_centers, g_widths) / max(_parzen_pdf(x, b_centers, b_widths), 1e-300)
        if ratio > best_ratio:
            best_x, best_ratio = x, ratio
    return param.untransform(best_x)


def _sample_choice_tpe(param: ChoiceParam, good: list, bad: list, rng: np.random.Generator):
    k = len(param.values)
    g_w = np.array([good.count(v) + 1.0 for v in param.values])
    b_w = np.array([bad.count(v) + 1.0 for v in param.values])
    g_p = g_w / g_w.sum()
    b_p = b_w / b_w.sum()
    best_v, best_ratio = None, -math.inf
    for _ in range(N_CANDIDATES):
        i = int(rng.choice(k, p=g_p))
        ratio = g_p[i] / b_p[i]
        if ratio > best_ratio:
            best_v, best_ratio = param.values[i], ratio
    return best_v


def _sample_raw(space, history: list[TrialRecord], rng: np.random.Generator) -> dict:
    completed = [t for t in history if t.status == "completed" and math.isfinite(t.loss)]
    if len(completed) < N_STARTUP:
        return {p.name: p.sample_prior(rng) for p in space}
    ordered = sorted(completed, key=lambda t: (t.loss, t.trial_id))
    n_good = max(1, math.ceil(GAMMA * len(ordered)))
    good_trials, bad_trials = ordered[:n_good], ordered[n_good:]
    out = {}
    for p in space:
        if isinstance(p, FloatParam):
            good = np.array([p.transform(t.config[p.name]) for t in good_trials])
            bad = np.array([p.transform(t.config[p.name]) for t in bad_trials])
            if len(bad) == 0:
                bad = good
            out[p.name] = _sample_float_tpe(p, good, bad, rng)
        else:
            good = [t.config[p.name] for t in good_trials]
            bad = [t.config[p.name] for t in bad_trials] or good
            out[p.name] = _sample_choice_tpe(p, good, bad, rng)
    return out


def sample_config(
    space,
    history: list[TrialRecord],
    rng: np.random.Generator,
    input_dim: int,
    overrides: dict | None = None,
) -> ClassifierConfig:
    """Draw one configuration; resamples on head-divisibility violations."""
    if not space:
        raise ConfigError("empty search space")
    for p in space:
        if isinstance(p, ChoiceParam) and not p.values:
            raise ConfigError(f"parameter {p.name} has an empty domain")
    last_error: ConfigError | None = None
    for _ in range(_MAX_RESAMPLE):
        raw = _sample_raw(space, history, rng)
        raw.update(overrides or {})
        try:
            cfg = ClassifierConfig.from_dict({"input_dim": input_dim, **raw})
            return cfg
        except ConfigError as exc:
            last_error = exc
    raise ConfigError(f"could not sample a valid config after {_MAX_RESAMPLE} tries: {last_error}")


@dataclass
class SearchResult:
    best_config: ClassifierConfig
    records: list[TrialRecord] = field(default_factory=list)

    @property
    def best_record(self) -> TrialRecord:
        completed = [t for t in self.records if t.status == "completed" and math.isfinite(t.loss)]
        return min(completed, key=lambda t: (t.loss, t.trial_id))


def load_trial_log(path: str | Path) -> list[TrialRecord]:
    p = Path(path)
    if not p.is_file():
        return []
    return [TrialRecord.from_json(line) for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]


def run_search(
    objective: Callable[[ClassifierConfig], float],
    input_dim: int,
    space=SEARCH_SPACE,
    budget: int = 150,
    seed: int = 0,
    log_path: str | Path | None = None,
    overrides: dict | None = None,
) -> SearchResult:
    """Run (or resume) a search of exactly `budget` trials; the best completed
    trial by validation loss wins. The trial log is append-only JSON lines and
    a run can resume from it."""
    if budget < 1:
        raise ArgumentError("budget must be >= 1")
    records = load_trial_log(log_path) if log_path else []
    if len(records) > budget:
        raise SearchError(f"trial log already has {len(records)} trials, budget is {budget}")

    log_file = Path(log_path).open("a", encoding="utf-8") if log_path else None
    try:
        for trial_id in range(len(records), budget):
            rng = np.random.default_rng([seed, 3, trial_id])
            cfg = sample_config(space, records, rng, input_dim, overrides)
            try:
                loss = float(objective(cfg))
                record = TrialRecord(trial_id, cfg.to_dict(), loss, "completed")
                if not math.isfinite(loss):
                    record = TrialRecord(trial_id, cfg.to_dict(), math.inf, "failed")
            except Exception:
                record = TrialRecord(trial_id, cfg.to_dict(), math.inf, "failed")
            records.append(record)
            if log_file:
                log_file.write(record.to_json() + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()

    completed = [t for t in records if t.status == "completed" and math.isfinite(t.loss)]
    if not completed:
        raise SearchError(f"all {len(records)} trials failed")
    best = min(completed, key=lambda t: (t.loss, t.trial_id))
    return SearchResult(ClassifierConfig.from_dict(best.config), records)
