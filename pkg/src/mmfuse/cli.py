"""Command-line pipeline driver.

Subcommands: validate, synth, align, fuse, train, search, eval, sweep,
latefuse, probe. Every subcommand is reproducible given identical inputs and
seeds, never mutates its inputs, and writes all artifacts into the requested
output directory. Alignment and fusion outputs are cached keyed by a content
hash of their inputs (MMFUSE_CACHE_DIR overrides the default cache root).

Prediction file layout (version 1): UTF-8 text, tab-separated, header line
``# mmfuse-predictions v1`` then ``recording_id  partition  p_CN  p_MCI  p_ADRD``
rows.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import LABELS, __version__
from .alignment import compute_token_spans, frame_resolution, read_timing_file
from .classifier import (
    ClassifierConfig,
    SequenceDataset,
    TransformerClassifier,
    dataset_log_loss,
    predict,
    save_checkpoint,
    train,
)
from .errors import ArgumentError, MMFuseError
from .evaluation import (
    DEFAULT_SEEDS,
    PARTITIONS,
    Corpus,
    layer_sweep,
    log_loss,
    macro_f1,
    multi_seed_eval,
    stratified_split,
    within_token_similarity,
)
from .fusion import build_fused, late_fuse
from .hypersearch import SEARCH_SPACE, run_search
from .synthgen import SynthParams, generate_corpus
from .tensorio import (
    EmbeddingContainer,
    read_container_file,
    validate_manifest,
    write_container_file,
)

PREDICTIONS_HEADER = "# mmfuse-predictions v1"


def _parse_int_list(text: str, what: str) -> list[int]:
    """Parse '1,3,5', '1-4' / '1..4', or combinations ('1-4,11,12')."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        sep = ".." if ".." in part else ("-" if "-" in part[1:] else None)
        if sep:
            lo_s, hi_s = part.split(sep, 1)
            out.extend(range(int(lo_s), int(hi_s) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ArgumentError(f"empty {what} list: {text!r}")
    return out


def _file_hash(*paths: Path) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(p.read_bytes())
    return h.hexdigest()


def _cache_fresh(out_path: Path, input_hash: str) -> bool:
    side = out_path.with_suffix(out_path.suffix + ".hash")
    return out_path.is_file() and side.is_file() and side.read_text().strip() == input_hash


def _cache_mark(out_path: Path, input_hash: str) -> None:
    out_path.with_suffix(out_path.suffix + ".hash").write_text(input_hash + "\n")


def _default_out(args, kind: str) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get("MMFUSE_CACHE_DIR")
    if root:
        return Path(root) / kind
    raise ArgumentError(f"--out is required (or set MMFUSE_CACHE_DIR) for {kind}")


def _freeze_run_config(outdir: Path, args, cfg: ClassifierConfig | None = None) -> None:
    payload = {"argv": sys.argv[1:], "version": __version__}
    if cfg is not None:
        payload["classifier_config"] = cfg.to_dict()
    (outdir / "run_config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_config(path: str | None, **defaults) -> ClassifierConfig:
    if path:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    else:
        d = {}
    merged = {**defaults, **d}
    # input_dim is replaced with the data width downstream; default to a
    # head-divisible placeholder so the config validates on load.
    merged.setdefault("input_dim", merged.get("num_heads", 4))
    return ClassifierConfig.from_dict(merged)


def write_predictions(path: Path, rows: list[tuple[str, str, np.ndarray]]) -> None:
    lines = [PREDICTIONS_HEADER, "recording_id\tpartition\t" + "\t".join(f"p_{l}" for l in LABELS)]
    for rid, part, p in rows:
        lines.append(f"{rid}\t{part}\t{float(p[0])!r}\t{float(p[1])!r}\t{float(p[2])!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_predictions(path: Path) -> list[tuple[str, str, np.ndarray]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != PREDICTIONS_HEADER:
        raise ArgumentError(f"{path}: missing header {PREDICTIONS_HEADER!r}")
    rows = []
    for line in lines[2:]:
        if not line.strip():
            continue
        rid, part, *ps = line.split("\t")
        rows.append((rid, part, np.array([float(x) for x in ps])))
    return rows


# -------------------------------------------------------------- subcommands

def cmd_validate(args) -> int:
    report = validate_manifest(args.manifest)
    print(report)
    return 0 if report.ok else 1


def cmd_synth(args) -> int:
    params = SynthParams(
        n_recordings=args.n,
        class_proportions=tuple(float(x) for x in args.proportions.split(",")),
        frames=args.frames,
        words_range=(args.words_min, args.words_max),
        d_audio=args.d_audio,
        d_text=args.d_text,
        rho_min=args.rho_min,
        rho_max=args.rho_max,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        n_layers=args.layers,
    )
    manifest = generate_corpus(params, args.out)
    print(manifest)
    return 0


def cmd_align(args) -> int:
    corpus = Corpus.load(args.manifest)
    outdir = _default_out(args, "align")
    outdir.mkdir(parents=True, exist_ok=True)
    for e in corpus.entries:
        layer = min(e.acoustic_paths)
        acoustic_path = corpus.base_dir / e.acoustic_paths[layer]
        timing_path = corpus.base_dir / e.timing_path
        out_path = outdir / f"{e.recording_id}.spans.tsv"
        input_hash = _file_hash(acoustic_path, timing_path)
        if not args.no_cache and _cache_fresh(out_path, input_hash):
            continue
        acoustic = read_container_file(acoustic_path)
        timings, pieces = read_timing_file(timing_path)
        res = frame_resolution(acoustic.duration_s, acoustic.rows)
        lines = ["# mmfuse-spans v1", "token_index\tword_index\tstart_frame\tend_frame"]
        if timings:
            spans, word_of = compute_token_spans(timings, pieces, res, acoustic.rows)
            for ti, (s, wi) in enumerate(zip(spans, word_of)):
                lines.append(f"{ti}\t{wi}\t{s.start}\t{s.end}")
        out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        _cache_mark(out_path, input_hash)
    print(f"aligned {len(corpus.entries)} recordings -> {outdir}")
    return 0


def cmd_fuse(args) -> int:
    corpus = Corpus.load(args.manifest)
    outdir = _default_out(args, "fuse")
    outdir.mkdir(parents=True, exist_ok=True)
    layers = _parse_int_list(args.layers, "layer")
    n_written = 0
    for e in corpus.entries:
        text_path = corpus.base_dir / e.text_path
        timing_path = corpus.base_dir / e.timing_path
        for layer in layers:
            if layer not in e.acoustic_paths:
                raise ArgumentError(f"{e.recording_id}: no acoustic container for layer {layer}")
            acoustic_path = corpus.base_dir / e.acoustic_paths[layer]
            out_path = outdir / f"{e.recording_id}.l{layer:02d}.femb"
            input_hash = _file_hash(acoustic_path, text_path, timing_path)
            if not args.no_cache and _cache_fresh(out_path, input_hash):
                continue
            acoustic = read_container_file(acoustic_path)
            text = read_container_file(text_path)
            timings, pieces = read_timing_file(timing_path)
            res = frame_resolution(acoustic.duration_s, acoustic.rows)
            spans = compute_token_spans(timings, pieces, res, acoustic.rows)[0] if timings else []
            token_embs = text.data if spans else np.zeros((0, text.cols), dtype=np.float32)
            fused = build_fused(acoustic.data, token_embs, spans)
            write_container_file(
                EmbeddingContainer("fused", fused.matrix, layer_index=layer,
                                   duration_s=acoustic.duration_s),
                out_path,
            )
            _cache_mark(out_path, input_hash)
            n_written += 1
    print(f"fused {n_written} containers -> {outdir}")
    return 0


def _strategy_dataset(corpus: Corpus, strategy: str, layer: int | None) -> SequenceDataset:
    return corpus.dataset(strategy, None if strategy == "text_only" else layer)


def cmd_train(args) -> int:
    corpus = Corpus.load(args.manifest)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ds = _strategy_dataset(corpus, args.strategy, args.layer)
    width = ds.sequences[0].shape[1]
    cfg = _load_config(args.config)
    cfg = replace(cfg, input_dim=width, seed=args.seed if args.seed is not None else cfg.seed)
    cfg.validate()
    _freeze_run_config(outdir, args, cfg)

    split = stratified_split(corpus.entries, seed=cfg.seed)
    parts = {p: [i for i, rid in enumerate(ds.ids) if split.assignment[rid] == p] for p in PARTITIONS}
    model = TransformerClassifier(cfg)
    history = train(model, ds.subset(parts["train"]), ds.subset(parts["validation"]))

    save_checkpoint(model, outdir / "checkpoint.npz")
    (outdir / "history.json").write_text(json.dumps(history.to_dict(), indent=2) + "\n")
    rows = []
    metrics = {}
    for part in PARTITIONS:
        sub = ds.subset(parts[part])
        probs = predict(model, sub)
        rows.extend((rid, part, probs[i]) for i, rid in enumerate(sub.ids))
        metrics[part] = {
            "f1": macro_f1(np.argmax(probs, axis=1), sub.labels),
            "log_loss": log_loss(probs, sub.labels),
        }
    write_predictions(outdir / "predictions.tsv", rows)
    (outdir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_search(args) -> int:
    corpus = Corpus.load(args.manifest)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ds = _strategy_dataset(corpus, args.strategy, args.layer)
    width = ds.sequences[0].shape[1]
    split = stratified_split(corpus.entries, seed=args.data_seed)
    parts = {p: [i for i, rid in enumerate(ds.ids) if split.assignment[rid] == p] for p in PARTITIONS}
    train_set = ds.subset(parts["train"])
    val_set = ds.subset(parts["validation"])
    overrides = {"max_epochs": args.max_epochs, "patience": args.patience}

    def objective(cfg: ClassifierConfig) -> float:
        run_cfg = replace(cfg, input_dim=width, seed=args.data_seed)
        model = TransformerClassifier(run_cfg)
        train(model, train_set, val_set)
        return dataset_log_loss(model, val_set)

    result = run_search(
        objective,
        input_dim=width,
        space=SEARCH_SPACE,
        budget=args.budget,
        seed=args.seed,
        log_path=outdir / "trials.jsonl",
        overrides=overrides,
    )
    best = result.best_record
    _freeze_run_config(outdir, args, result.best_config)
    result.best_config.to_json_file(outdir / "best_config.json")
    print(f"best trial {best.trial_id}: loss {best.loss:.6f}")
    return 0


def cmd_eval(args) -> int:
    corpus = Corpus.load(args.manifest)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    # LF trains one model per modality; per-modality widths are applied inside
    # the protocol, so probe the acoustic dataset just to pin a valid config.
    probe_strategy = "acoustic_only" if args.strategy == "LF" else args.strategy
    ds = _strategy_dataset(corpus, probe_strategy, args.layer)
    cfg = _load_config(args.config)
    cfg = replace(cfg, input_dim=ds.sequences[0].shape[1])
    _freeze_run_config(outdir, args, cfg)
    seeds = _parse_int_list(args.seeds, "seed")
    report = multi_seed_eval(corpus, args.strategy, args.layer, cfg, seeds)
    report.write(outdir / "report.tsv")
    for part in PARTITIONS:
        if part in report.mean:
            m = report.mean[part]
            print(f"{args.strategy} {part}: mean F1 {m['f1']:.4f}, mean log loss {m['log_loss']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    corpus = Corpus.load(args.manifest)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = _load_config(args.config)
    _freeze_run_config(outdir, args, cfg)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    layers = _parse_int_list(args.layers, "layer")
    seeds = _parse_int_list(args.seeds, "seed")
    reports, table, summary = layer_sweep(corpus, strategies, layers, cfg, seeds)
    (outdir / "table.tsv").write_text(table, encoding="utf-8")
    (outdir / "summary.tsv").write_text(summary, encoding="utf-8")
    for r in reports:
        layer_s = "text" if r.layer is None else f"l{r.layer:02d}"
        r.write(outdir / f"report_{r.strategy}_{layer_s}.tsv")
    print(summary, end="")
    return 0


def cmd_latefuse(args) -> int:
    a = read_predictions(Path(args.pred[0]))
    b = read_predictions(Path(args.pred[1]))
    keys_a = [(rid, part) for rid, part, _ in a]
    keys_b = [(rid, part) for rid, part, _ in b]
    if keys_a != keys_b:
        raise ArgumentError("prediction files cover different recordings or partitions")
    fused = late_fuse(np.stack([p for _, _, p in a]), np.stack([p for _, _, p in b]))
    write_predictions(Path(args.out), [(rid, part, fused[i]) for i, (rid, part) in enumerate(keys_a)])
    print(f"late-fused {len(fused)} predictions -> {args.out}")
    return 0


def cmd_probe(args) -> int:
    corpus = Corpus.load(args.manifest)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    layers = _parse_int_list(args.layers, "layer")
    lines = ["# mmfuse-probe v1", "recording_id\tlayer\twithin_token_similarity"]
    for e in corpus.entries:
        timings, pieces = read_timing_file(corpus.base_dir / e.timing_path)
        for layer in layers:
            acoustic = read_container_file(corpus.base_dir / e.acoustic_paths[layer])
            res = frame_resolution(acoustic.duration_s, acoustic.rows)
            spans = compute_token_spans(timings, pieces, res, acoustic.rows)[0] if timings else []
            sim = within_token_similarity(acoustic.data, spans)
            lines.append(f"{e.recording_id}\t{layer}\t{sim!r}")
    (outdir / "probe.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"probed {len(corpus.entries)} recordings x {len(layers)} layers -> {outdir / 'probe.tsv'}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfuse", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"mmfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus manifest and its files")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--frames", type=int, default=150)
    p.add_argument("--d-audio", type=int, default=32)
    p.add_argument("--d-text", type=int, default=32)
    p.add_argument("--words-min", type=int, default=8)
    p.add_argument("--words-max", type=int, default=16)
    p.add_argument("--proportions", default="0.570,0.082,0.347")
    p.add_argument("--rho-min", type=float, default=0.0)
    p.add_argument("--rho-max", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.3)
    p.add_argument("--layers", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("align", help="cache token frame spans per recording")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("fuse", help="cache early-fusion tensors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--layers", required=True, help="e.g. 1-4,11,12")
    p.add_argument("--out")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train", help="train one configuration on one strategy")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategy", required=True, choices=("acoustic_only", "text_only", "EF"))
    p.add_argument("--layer", type=int)
    p.add_argument("--config", help="classifier config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", help="TPE hyperparameter search")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategy", required=True, choices=("acoustic_only", "text_only", "EF"))
    p.add_argument("--layer", type=int)
    p.add_argument("--budget", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="multi-seed evaluation protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategy", required=True, choices=("acoustic_only", "text_only", "EF", "LF"))
    p.add_argument("--layer", type=int)
    p.add_argument("--config", help="classifier config JSON")
    p.add_argument("--seeds", default=",".join(str(s) for s in DEFAULT_SEEDS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="layers x strategies evaluation sweep")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategies", default="acoustic_only,text_only,EF,LF")
    p.add_argument("--layers", default="1-12")
    p.add_argument("--config", help="classifier config JSON")
    p.add_argument("--seeds", default=",".join(str(s) for s in DEFAULT_SEEDS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("latefuse", help="average two prediction files")
    p.add_argument("--pred", nargs=2, required=True, metavar=("A", "B"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_latefuse)

    p = sub.add_parser("probe", help="cosine-similarity probe over acoustic layers")
    p.add_argument("--manifest", required=True)
    p.add_argument("--layers", default="1,12")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MMFuseError as exc:
        print(f"mmfuse: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
