"""Metrics, stratified splitting, the 10-seed evaluation protocol, layer
sweeps, and the cosine-similarity probe.

Report files are deterministic text: identical inputs and seeds give
byte-identical artifacts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import LABEL_TO_INDEX, LABELS, NUM_CLASSES
from .alignment import compute_token_spans, frame_resolution, read_timing_file
from .classifier import ClassifierConfig, SequenceDataset, TransformerClassifier, predict, train
from .errors import ArgumentError, TrainingError, ValidationError
from .fusion import build_fused, late_fuse
from .tensorio import RecordingManifestEntry, largest_remainder_counts, read_container_file, read_manifest

PARTITIONS = ("train", "validation", "test")
DEFAULT_RATIOS = (0.64, 0.16, 0.20)
DEFAULT_SEEDS = tuple(range(1, 11))
STRATEGIES = ("acoustic_only", "text_only", "EF", "LF")

EVAL_REPORT_HEADER = "# mmfuse-evalreport v1"
PROB_CLIP = 1e-15


# ------------------------------------------------------------------ metrics

def log_loss(posteriors: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class, probabilities clipped
    to [1e-15, 1 - 1e-15]."""
    posteriors = np.asarray(posteriors, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if posteriors.size == 0 or labels.size == 0:
        raise ArgumentError("log_loss needs at least one prediction")
    if posteriors.ndim != 2 or posteriors.shape[0] != labels.shape[0]:
        raise ArgumentError(f"shape mismatch: {posteriors.shape} posteriors vs {labels.shape} labels")
    p_true = posteriors[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.clip(p_true, PROB_CLIP, 1.0 - PROB_CLIP))))


def macro_f1(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Unweighted mean of per-class F1 over the three classes. A class absent
    from both predictions and labels scores 0 (with a warning)."""
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if predictions.size == 0:
        raise ArgumentError("macro_f1 needs at least one prediction")
    if predictions.shape != labels.shape:
        raise ArgumentError(f"shape mismatch: {predictions.shape} vs {labels.shape}")
    scores = []
    for k in range(NUM_CLASSES):
        tp = int(np.sum((predictions == k) & (labels == k)))
        fp = int(np.sum((predictions == k) & (labels != k)))
        fn = int(np.sum((predictions != k) & (labels == k)))
        if tp == 0 and fp == 0 and fn == 0:
            warnings.warn(f"class {LABELS[k]} absent from both predictions and labels; F1 scored 0",
                          stacklevel=2)
            scores.append(0.0)
            continue
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


# -------------------------------------------------------------------- split

@dataclass
class SplitAssignment:
    assignment: dict[str, str]  # recording_id -> partition
    seed: int

    def ids(self, partition: str) -> list[str]:
        return sorted(r for r, p in self.assignment.items() if p == partition)


def stratified_split(
    entries: list[RecordingManifestEntry],
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitAssignment:
    """Partition recordings into train/validation/test, stratified by
    (label, sex, corpus_id), largest-remainder rounding per stratum with
    remainder ties resolved in partition order (train first)."""
    if len(ratios) != len(PARTITIONS):
        raise ArgumentError(f"need {len(PARTITIONS)} ratios")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ArgumentError(f"ratios must sum to 1, got {sum(ratios)}")
    if not entries:
        raise ArgumentError("empty manifest")

    strata: dict[tuple[str, str, str], list[str]] = {}
    for e in entries:
        strata.setdefault((e.label, e.sex, e.corpus_id), []).append(e.recording_id)

    rng = np.random.default_rng([seed, 2])
    assignment: dict[str, str] = {}
    for key in sorted(strata):
        ids = sorted(strata[key])
        rng.shuffle(ids)
        counts = largest_remainder_counts(len(ids), ratios)
        pos = 0
        for partition, count in zip(PARTITIONS, counts):
            for rid in ids[pos : pos + count]:
                assignment[rid] = partition
            pos += count
    return SplitAssignment(assignment, seed)


# ------------------------------------------------------------------- corpus

@dataclass
class Corpus:
    """Manifest plus lazily loaded per-strategy datasets."""

    entries: list[RecordingManifestEntry]
    base_dir: Path
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def load(cls, manifest_path: str | Path) -> "Corpus":
        manifest_path = Path(manifest_path)
        return cls(entries=read_manifest(manifest_path), base_dir=manifest_path.parent)

    @property
    def layers(self) -> list[int]:
        common: set[int] | None = None
        for e in self.entries:
            keys = set(e.acoustic_paths)
            common = keys if common is None else common & keys
        return sorted(common or ())

    def labels(self) -> np.ndarray:
        return np.array([LABEL_TO_INDEX[e.label] for e in self.entries], dtype=int)

    def _ef_sequence(self, e: RecordingManifestEntry, layer: int) -> np.ndarray:
        acoustic = read_container_file(self.base_dir / e.acoustic_paths[layer])
        text = read_container_file(self.base_dir / e.text_path)
        timings, pieces = read_timing_file(self.base_dir / e.timing_path)
        res = frame_resolution(acoustic.duration_s, acoustic.rows)
        if timings:
            spans, _ = compute_token_spans(timings, pieces, res, acoustic.rows)
        else:
            spans = []
        n_tokens = len(spans)
        if n_tokens and n_tokens != text.rows:
            raise ValidationError(
                f"{e.recording_id}: {text.rows} text rows but {n_tokens} aligned tokens"
            )
        token_embs = text.data if n_tokens else np.zeros((0, text.cols), dtype=np.float32)
        fused = build_fused(acoustic.data, token_embs, spans)
        return fused.matrix

    def dataset(self, strategy: str, layer: int | None = None) -> SequenceDataset:
        if strategy not in ("acoustic_only", "text_only", "EF"):
            raise ArgumentError(f"no per-recording dataset for strategy {strategy!r}")
        key = (strategy, layer)
        if key in self._cache:
            return self._cache[key]
        if strategy != "text_only" and layer is None:
            raise ArgumentError(f"strategy {strategy} needs a layer")
        sequences = []
        for e in self.entries:
            if strategy == "acoustic_only":
                sequences.append(read_container_file(self.base_dir / e.acoustic_paths[layer]).data)
            elif strategy == "text_only":
                sequences.append(read_container_file(self.base_dir / e.text_path).data)
            else:
                sequences.append(self._ef_sequence(e, layer))
        ds = SequenceDataset(
            ids=[e.recording_id for e in self.entries],
            sequences=sequences,
            labels=self.labels(),
        )
        self._cache[key] = ds
        return ds

    def evict(self, strategy: str, layer: int | None = None) -> None:
        """Drop one cached dataset (layer sweeps over large corpora would
        otherwise keep every layer in memory)."""
        self._cache.pop((strategy, layer), None)


# ------------------------------------------------------------------ reports

@dataclass
class SeedResult:
    seed: int
    status: str  # completed | failed
    metrics: dict[str, dict[str, float]]  # partition -> {f1, log_loss}


@dataclass
class EvalReport:
    strategy: str
    layer: int | None
    seed_results: list[SeedResult]
    mean: dict[str, dict[str, float]]
    incomplete: bool = False
    note: str = ""

    def mean_metric(self, metric: str, partition: str = "test") -> float:
        return self.mean[partition][metric]

    def to_tsv(self) -> str:
        lines = [EVAL_REPORT_HEADER, "strategy\tlayer\tseed\tpartition\tf1\tlog_loss\tstatus"]
        layer_s = "-" if self.layer is None else str(self.layer)
        for sr in self.seed_results:
            for part in PARTITIONS:
                if sr.status == "completed":
                    f1 = repr(sr.metrics[part]["f1"])
                    ll = repr(sr.metrics[part]["log_loss"])
                else:
                    f1 = ll = "nan"
                lines.append(
                    f"{self.strategy}\t{layer_s}\t{sr.seed}\t{part}\t{f1}\t{ll}\t{sr.status}"
                )
        for part in PARTITIONS:
            if part in self.mean:
                f1 = repr(self.mean[part]["f1"])
                ll = repr(self.mean[part]["log_loss"])
                lines.append(f"{self.strategy}\t{layer_s}\tmean\t{part}\t{f1}\t{ll}\t-")
        if self.incomplete:
            lines.append(f"# incomplete: {self.note or 'one or more seeds failed'}")
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


def _aggregate(seed_results: list[SeedResult]) -> dict[str, dict[str, float]]:
    completed = [sr for sr in seed_results if sr.status == "completed"]
    mean: dict[str, dict[str, float]] = {}
    for part in PARTITIONS:
        if completed:
            mean[part] = {
                "f1": float(np.mean([sr.metrics[part]["f1"] for sr in completed])),
                "log_loss": float(np.mean([sr.metrics[part]["log_loss"] for sr in completed])),
            }
    return mean


def _partition_indices(ds: SequenceDataset, split: SplitAssignment) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {p: [] for p in PARTITIONS}
    for i, rid in enumerate(ds.ids):
        out[split.assignment[rid]].append(i)
    return out


def _train_and_posteriors(
    ds: SequenceDataset, split: SplitAssignment, cfg: ClassifierConfig, seed: int
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Train one model on the split; returns partition -> (posteriors, labels)."""
    parts = _partition_indices(ds, split)
    width = ds.sequences[0].shape[1]
    run_cfg = replace(cfg, input_dim=width, seed=seed)
    model = TransformerClassifier(run_cfg)
    train(model, ds.subset(parts["train"]), ds.subset(parts["validation"]))
    out = {}
    for part in PARTITIONS:
        sub = ds.subset(parts[part])
        out[part] = (predict(model, sub), sub.labels)
    return out


def _metrics_from_posteriors(by_part: dict[str, tuple[np.ndarray, np.ndarray]]) -> dict:
    metrics = {}
    for part, (probs, labels) in by_part.items():
        metrics[part] = {
            "f1": macro_f1(np.argmax(probs, axis=1), labels),
            "log_loss": log_loss(probs, labels),
        }
    return metrics


def multi_seed_eval(
    corpus: Corpus,
    strategy: str,
    layer: int | None,
    cfg: ClassifierConfig,
    seeds=DEFAULT_SEEDS,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
) -> EvalReport:
    """The repeated-evaluation protocol: per seed, a fresh stratified split,
    fresh initialization, and fresh training; reports per-seed metrics and
    their means over completed runs."""
    if strategy not in STRATEGIES:
        raise ArgumentError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    seed_results: list[SeedResult] = []
    for seed in seeds:
        split = stratified_split(corpus.entries, ratios, seed=seed)
        try:
            if strategy == "LF":
                audio = _train_and_posteriors(corpus.dataset("acoustic_only", layer), split, cfg, seed)
                text = _train_and_posteriors(corpus.dataset("text_only"), split, cfg, seed)
                fused = {
                    part: (late_fuse(audio[part][0], text[part][0]), audio[part][1])
                    for part in PARTITIONS
                }
                metrics = _metrics_from_posteriors(fused)
            else:
                ds = corpus.dataset(strategy, None if strategy == "text_only" else layer)
                metrics = _metrics_from_posteriors(_train_and_posteriors(ds, split, cfg, seed))
            seed_results.append(SeedResult(seed, "completed", metrics))
        except TrainingError:
            seed_results.append(SeedResult(seed, "failed", {}))
    mean = _aggregate(seed_results)
    incomplete = any(sr.status != "completed" for sr in seed_results)
    return EvalReport(
        strategy=strategy,
        layer=None if strategy == "text_only" else layer,
        seed_results=seed_results,
        mean=mean,
        incomplete=incomplete,
        note="one or more seeds failed" if incomplete else "",
    )


# -------------------------------------------------------------- layer sweep

def layer_sweep(
    corpus: Corpus,
    strategies,
    layers,
    cfg: ClassifierConfig,
    seeds=DEFAULT_SEEDS,
) -> tuple[list[EvalReport], str, str]:
    """One EvalReport per (strategy, layer); returns (reports, machine-readable
    table, best-per-strategy summary). Missing layers are skipped, flagged in
    the report list.

    Trained models are shared across strategies: LF averages the posteriors of
    the same acoustic- and text-only models the unimodal reports use, so a
    sweep costs one acoustic and one EF training per (layer, seed) plus one
    text training per seed. Results are identical to running each strategy
    through multi_seed_eval independently (training is deterministic)."""
    for s in strategies:
        if s not in STRATEGIES:
            raise ArgumentError(f"unknown strategy {s!r}; expected one of {STRATEGIES}")
    available = set(corpus.layers)
    want = list(dict.fromkeys(strategies))
    need_text = "text_only" in want or "LF" in want
    need_audio = "acoustic_only" in want or "LF" in want
    need_ef = "EF" in want

    splits = {seed: stratified_split(corpus.entries, seed=seed) for seed in seeds}

    def run(ds: SequenceDataset, seed: int):
        try:
            return _train_and_posteriors(ds, splits[seed], cfg, seed)
        except TrainingError:
            return None

    text_runs: dict[int, dict | None] = {}
    if need_text:
        ds_text = corpus.dataset("text_only")
        for seed in seeds:
            text_runs[seed] = run(ds_text, seed)

    audio_runs: dict[tuple[int, int], dict | None] = {}
    ef_runs: dict[tuple[int, int], dict | None] = {}
    for layer in layers:
        if layer not in available:
            continue
        if need_audio:
            ds = corpus.dataset("acoustic_only", layer)
            for seed in seeds:
                audio_runs[(layer, seed)] = run(ds, seed)
            corpus.evict("acoustic_only", layer)
        if need_ef:
            ds = corpus.dataset("EF", layer)
            for seed in seeds:
                ef_runs[(layer, seed)] = run(ds, seed)
            corpus.evict("EF", layer)

    def assemble(strategy: str, layer: int | None, run_for_seed) -> EvalReport:
        seed_results = []
        for seed in seeds:
            posteriors = run_for_seed(seed)
            if posteriors is None:
                seed_results.append(SeedResult(seed, "failed", {}))
            else:
                seed_results.append(SeedResult(seed, "completed", _metrics_from_posteriors(posteriors)))
        incomplete = any(sr.status != "completed" for sr in seed_results)
        return EvalReport(strategy, layer, seed_results, _aggregate(seed_results),
                          incomplete=incomplete,
                          note="one or more seeds failed" if incomplete else "")

    def lf_posteriors(layer: int, seed: int):
        a, t = audio_runs[(layer, seed)], text_runs[seed]
        if a is None or t is None:
            return None
        return {part: (late_fuse(a[part][0], t[part][0]), a[part][1]) for part in PARTITIONS}

    reports: list[EvalReport] = []
    for strategy in want:
        if strategy == "text_only":
            reports.append(assemble(strategy, None, lambda seed: text_runs[seed]))
            continue
        for layer in layers:
            if layer not in available:
                reports.append(
                    EvalReport(strategy, layer, [], {}, incomplete=True,
                               note=f"layer {layer} missing from corpus; skipped")
                )
                continue
            if strategy == "acoustic_only":
                reports.append(assemble(strategy, layer, lambda seed, l=layer: audio_runs[(l, seed)]))
            elif strategy == "EF":
                reports.append(assemble(strategy, layer, lambda seed, l=layer: ef_runs[(l, seed)]))
            else:
                reports.append(assemble("LF", layer, lambda seed, l=layer: lf_posteriors(l, seed)))
    return reports, sweep_table(reports), sweep_summary(reports)


def sweep_table(reports: list[EvalReport]) -> str:
    lines = ["# mmfuse-sweep v1", "strategy\tlayer\tpartition\tmean_f1\tmean_log_loss\tseeds\tstatus"]
    for r in reports:
        layer_s = "-" if r.layer is None else str(r.layer)
        n_done = sum(1 for sr in r.seed_results if sr.status == "completed")
        if not r.mean:
            lines.append(f"{r.strategy}\t{layer_s}\t-\tnan\tnan\t0\tskipped")
            continue
        status = "incomplete" if r.incomplete else "ok"
        for part in PARTITIONS:
            m = r.mean[part]
            lines.append(
                f"{r.strategy}\t{layer_s}\t{part}\t{m['f1']!r}\t{m['log_loss']!r}\t{n_done}\t{status}"
            )
    return "\n".join(lines) + "\n"


def sweep_summary(reports: list[EvalReport], partition: str = "test") -> str:
    """Best layer per strategy, by F1 and by log loss; one row when they agree,
    two when they disagree."""
    lines = ["# mmfuse-sweep-summary v1", "strategy\tcriterion\tlayer\tmean_f1\tmean_log_loss"]
    by_strategy: dict[str, list[EvalReport]] = {}
    for r in reports:
        if r.mean:
            by_strategy.setdefault(r.strategy, []).append(r)
    for strategy in sorted(by_strategy):
        rs = by_strategy[strategy]
        best_f1 = max(rs, key=lambda r: r.mean[partition]["f1"])
        best_ll = min(rs, key=lambda r: r.mean[partition]["log_loss"])

        def row(criterion: str, r: EvalReport) -> str:
            layer_s = "-" if r.layer is None else str(r.layer)
            return (f"{strategy}\t{criterion}\t{layer_s}\t"
                    f"{r.mean[partition]['f1']!r}\t{r.mean[partition]['log_loss']!r}")

        if best_f1 is best_ll:
            lines.append(row("best_f1+best_log_loss", best_f1))
        else:
            lines.append(row("best_f1", best_f1))
            lines.append(row("best_log_loss", best_ll))
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------- cosine probe

def cosine_similarity_matrix(frames: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity between frame vectors. Zero-norm rows get
    similarity 0 by convention (flagged with a warning)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ArgumentError(f"need a non-empty [T, D] matrix, got shape {frames.shape}")
    norms = np.linalg.norm(frames, axis=1)
    zero = norms == 0.0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-norm rows; their similarities are 0", stacklevel=2)
    safe = np.where(zero, 1.0, norms)
    unit = frames / safe[:, None]
    sim = unit @ unit.T
    sim = np.clip((sim + sim.T) / 2.0, -1.0, 1.0)
    sim[zero, :] = 0.0
    sim[:, zero] = 0.0
    return sim


def within_token_similarity(frames: np.ndarray, spans) -> float:
    """Mean cosine similarity over off-diagonal frame pairs that share a token
    span. NaN when no span covers two or more frames."""
    sim = cosine_similarity_matrix(frames)
    total = 0.0
    count = 0
    for s in spans:
        length = s.end - s.start
        if length < 2:
            continue
        block = sim[s.start : s.end, s.start : s.end]
        total += float(block.sum() - np.trace(block))
        count += length * (length - 1)
    return total / count if count else float("nan")
