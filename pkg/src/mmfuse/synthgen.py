"""Synthetic multimodal corpus with a tunable cross-modal redundancy dial.

Each recording draws a 2-d class signal (u, v) around its class mean; the
label is the nearest class mean, so it is a deterministic function of the
latents and separable only in the joint (u, v) space. The content vector c
(first coordinate u) drives the text tokens; the style vector s (first
coordinate v) drives the audio frames. Redundancy rho mixes a linear image of
c into the audio stream against a compensating per-recording nuisance, so the
content information available from audio genuinely grows with rho instead of
being a rescaling a linear readout could undo:

    audio frame  = A s + B (rho c + L sqrt(1 - rho^2) eta) + rho k Btok tau_j + sigma eps
    token embed  = C c + k Ctok tau_j + sigma xi

tau_j is a per-token identity vector: at high rho, frames sharing a token
share its image, which is what the cosine probe measures. Synthetic "layers"
1..12 ramp rho linearly from rho_min to rho_max, standing in for the
depth-wise growth of lexical content in acoustic encoders.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import LABELS
from .alignment import WordTiming, write_timing_file
from .errors import ArgumentError
from .tensorio import (
    EmbeddingContainer,
    RecordingManifestEntry,
    largest_remainder_counts,
    write_container_file,
    write_manifest,
)

FRAME_STEP_S = 0.02

# Class means in the (u, v) signal plane: u separates MCI, v separates ADRD,
# CN sits at the origin. Neither coordinate alone separates all three classes.
CLASS_UV = ((0.0, 0.0), (1.3, 0.0), (0.0, 1.3))
WITHIN_CLASS_SIGMA = 0.25
NUISANCE_SCALE = 0.5

CONTENT_DIM = 4
STYLE_DIM = 4
TOKEN_DIM = 4
TOKEN_SCALE = 0.5

_SYLLABLES = ("ba", "do", "ki", "lu", "mer", "na", "po", "ri", "sa", "ta", "ve", "zo")


@dataclass
class SynthParams:
    n_recordings: int = 600
    class_proportions: tuple[float, float, float] = (0.570, 0.082, 0.347)
    frames: int = 150
    words_range: tuple[int, int] = (8, 16)
    d_audio: int = 32
    d_text: int = 32
    rho_min: float = 0.0
    rho_max: float = 1.0
    noise_sigma: float = 0.3
    seed: int = 0
    n_layers: int = 12

    def validate(self) -> None:
        if self.n_recordings < 1:
            raise ArgumentError("n_recordings must be >= 1")
        if abs(sum(self.class_proportions) - 1.0) > 5e-3 or any(p < 0 for p in self.class_proportions):
            raise ArgumentError(f"class_proportions must lie on the simplex, got {self.class_proportions}")
        if not 1 <= self.words_range[0] <= self.words_range[1]:
            raise ArgumentError(f"bad words_range {self.words_range}")
        if self.frames < self.words_range[1]:
            raise ArgumentError(f"frames ({self.frames}) must be >= max word count ({self.words_range[1]})")
        if min(self.d_audio, self.d_text) < max(CONTENT_DIM + STYLE_DIM, TOKEN_DIM * 2):
            raise ArgumentError("d_audio and d_text must be >= 8")
        for rho in (self.rho_min, self.rho_max):
            if not 0.0 <= rho <= 1.0:
                raise ArgumentError(f"rho must be in [0, 1], got {rho}")
        if self.noise_sigma < 0:
            raise ArgumentError("noise_sigma must be >= 0")
        if not 1 <= self.n_layers <= 12:
            raise ArgumentError("n_layers must be in 1..12")


def rho_for_layer(params: SynthParams, layer: int) -> float:
    if params.n_layers == 1:
        return params.rho_min
    frac = (layer - 1) / (params.n_layers - 1)
    return params.rho_min + frac * (params.rho_max - params.rho_min)


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(rows, cols)))
    return q[:, :cols]


def _nearest_class(u: float, v: float) -> int:
    d2 = [(u - mu) ** 2 + (v - mv) ** 2 for mu, mv in CLASS_UV]
    return int(np.argmin(d2))


def _draw_latents(rng: np.random.Generator, label: int) -> tuple[float, float]:
    mu, mv = CLASS_UV[label]
    for _ in range(1000):
        u = mu + WITHIN_CLASS_SIGMA * rng.normal()
        v = mv + WITHIN_CLASS_SIGMA * rng.normal()
        if _nearest_class(u, v) == label:
            return u, v
    return mu, mv


def _word_timings(rng: np.random.Generator, n_words: int, duration_s: float) -> list[WordTiming]:
    widths = rng.uniform(0.08, 0.40, size=n_words)
    gaps = rng.uniform(0.02, 0.25, size=n_words + 1)
    scale = duration_s * 0.97 / (widths.sum() + gaps.sum())
    widths *= scale
    gaps *= scale
    words = []
    t = gaps[0]
    for i in range(n_words):
        n_syll = int(rng.integers(2, 5))
        word = "".join(_SYLLABLES[rng.integers(len(_SYLLABLES))] for _ in range(n_syll))
        words.append(WordTiming(word, float(t), float(t + widths[i])))
        t += widths[i] + gaps[i + 1]
    return words


def _word_pieces(word: str) -> list[str]:
    if len(word) >= 6:
        cut = (len(word) + 1) // 2
        return [word[:cut], word[cut:]]
    return [word]


def _token_frame_spans(timings, pieces, total_frames: int):
    from .alignment import compute_token_spans

    return compute_token_spans(timings, pieces, FRAME_STEP_S, total_frames)[0]


def generate_corpus(params: SynthParams, outdir: str | Path) -> Path:
    """Write containers, timing files, the manifest, ground-truth latents and a
    parameter record under outdir. Deterministic per params.seed; byte-identical
    on rerun. Returns the manifest path."""
    params.validate()
    outdir = Path(outdir)
    (outdir / "containers").mkdir(parents=True, exist_ok=True)
    (outdir / "timings").mkdir(parents=True, exist_ok=True)

    corpus_rng = np.random.default_rng([params.seed, 0])
    proj_rng = np.random.default_rng([params.seed, 1])
    proj_audio_style = _orthonormal_columns(proj_rng, params.d_audio, STYLE_DIM)
    proj_audio_content = _orthonormal_columns(proj_rng, params.d_audio, CONTENT_DIM)
    proj_audio_token = _orthonormal_columns(proj_rng, params.d_audio, TOKEN_DIM)
    proj_text_content = _orthonormal_columns(proj_rng, params.d_text, CONTENT_DIM)
    proj_text_token = _orthonormal_columns(proj_rng, params.d_text, TOKEN_DIM)

    counts = largest_remainder_counts(params.n_recordings, params.class_proportions)
    label_seq = np.repeat(np.arange(3), counts)
    corpus_rng.shuffle(label_seq)

    duration_s = params.frames * FRAME_STEP_S
    rhos = [rho_for_layer(params, l) for l in range(1, params.n_layers + 1)]

    entries: list[RecordingManifestEntry] = []
    latent_ids: list[str] = []
    latent_content = np.zeros((params.n_recordings, CONTENT_DIM))
    latent_style = np.zeros((params.n_recordings, STYLE_DIM))

    for i in range(params.n_recordings):
        rid = f"rec{i:05d}"
        rng = np.random.default_rng([params.seed, 100 + i])
        label = int(label_seq[i])

        u, v = _draw_latents(rng, label)
        content = np.concatenate([[u], rng.normal(size=CONTENT_DIM - 1)])
        style = np.concatenate([[v], rng.normal(size=STYLE_DIM - 1)])
        nuisance = rng.normal(size=CONTENT_DIM)

        n_words = int(rng.integers(params.words_range[0], params.words_range[1] + 1))
        timings = _word_timings(rng, n_words, duration_s)
        pieces = [_word_pieces(w.word) for w in timings]
        spans = _token_frame_spans(timings, pieces, params.frames)
        n_tokens = len(spans)
        token_ids = rng.normal(size=(n_tokens, TOKEN_DIM))

        # Text container: content image plus token identity plus noise.
        text = content @ proj_text_content.T + TOKEN_SCALE * token_ids @ proj_text_token.T
        text = text + params.noise_sigma * rng.normal(size=(n_tokens, params.d_text))

        # Per-frame token membership (token index or -1 for silence).
        frame_token = np.full(params.frames, -1, dtype=int)
        for k, s in enumerate(spans):
            frame_token[s.start : s.end] = k

        base_style = style @ proj_audio_style.T  # [d_audio]
        token_img = token_ids @ proj_audio_token.T if n_tokens else np.zeros((0, params.d_audio))
        frame_noise = rng.normal(size=(params.n_layers, params.frames, params.d_audio))

        acoustic_paths: dict[int, str] = {}
        for li, rho in enumerate(rhos):
            layer = li + 1
            mixed = rho * content + NUISANCE_SCALE * np.sqrt(1.0 - rho * rho) * nuisance
            frames = np.tile(base_style + mixed @ proj_audio_content.T, (params.frames, 1))
            covered = frame_token >= 0
            if n_tokens:
                frames[covered] += rho * TOKEN_SCALE * token_img[frame_token[covered]]
            frames += params.noise_sigma * frame_noise[li]
            rel = f"containers/{rid}.l{layer:02d}.aemb"
            write_container_file(
                EmbeddingContainer("acoustic", frames.astype(np.float32), layer_index=layer,
                                   duration_s=duration_s),
                outdir / rel,
            )
            acoustic_paths[layer] = rel

        text_rel = f"containers/{rid}.temb"
        write_container_file(EmbeddingContainer("text", text.astype(np.float32)), outdir / text_rel)
        timing_rel = f"timings/{rid}.tsv"
        write_timing_file(outdir / timing_rel, timings, pieces)

        entries.append(
            RecordingManifestEntry(
                recording_id=rid,
                label=LABELS[label],
                sex="M" if rng.random() < 0.5 else "F",
                age=int(np.clip(rng.normal(75.0, 8.0), 55, 95)),
                corpus_id="synthA" if rng.random() < 0.5 else "synthB",
                acoustic_paths=acoustic_paths,
                text_path=text_rel,
                timing_path=timing_rel,
            )
        )
        latent_ids.append(rid)
        latent_content[i] = content
        latent_style[i] = style

    manifest_path = outdir / "manifest.tsv"
    write_manifest(entries, manifest_path)
    np.savez(
        outdir / "latents.npz",
        ids=np.array(latent_ids),
        labels=label_seq,
        content=latent_content,
        style=latent_style,
    )
    record = asdict(params)
    record["rho_per_layer"] = rhos
    (outdir / "synth_params.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path
