"""Early fusion (token embeddings broadcast over frame spans) and late fusion
(class-posterior averaging)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import impl as K
from .alignment import FrameSpan
from .errors import ArgumentError

POSTERIOR_TOL = 1e-6


@dataclass
class FusedSequence:
    """[T, D_audio + D_text] matrix with per-frame validity masks.

    Columns 0..D_audio hold the acoustic frame features unchanged; the text
    block equals the covering token's embedding where text_valid is set and is
    all-zero elsewhere (silence). frame_valid marks real frames; it is all True
    here and only narrows when sequences get padded into batches.
    """

    matrix: np.ndarray
    text_valid: np.ndarray
    frame_valid: np.ndarray
    d_audio: int
    d_text: int


def build_fused(
    acoustic: np.ndarray,
    token_embs: np.ndarray,
    spans: list[FrameSpan],
) -> FusedSequence:
    """Concatenate frame-level acoustic features with token embeddings repeated
    over each token's frame span.

    spans must be monotone, non-overlapping and within [0, T); zero-length
    spans are allowed and cover nothing. N = 0 yields an all-silence fused
    sequence.
    """
    if acoustic.ndim != 2:
        raise ArgumentError(f"acoustic matrix must be 2-d, got shape {acoustic.shape}")
    total_frames = acoustic.shape[0]
    n = len(spans)
    if token_embs.ndim != 2 or token_embs.shape[0] != n:
        raise ArgumentError(f"token_embs rows ({token_embs.shape[0]}) must equal span count ({n})")
    prev_end = 0
    for s in spans:
        if not (0 <= s.start <= s.end <= total_frames):
            raise ArgumentError(f"span [{s.start}, {s.end}) outside frame range [0, {total_frames})")
        if s.start < prev_end:
            raise ArgumentError(f"span [{s.start}, {s.end}) overlaps its predecessor (end {prev_end})")
        prev_end = s.end

    acoustic32 = np.ascontiguousarray(acoustic, dtype=np.float32)
    tokens32 = np.ascontiguousarray(token_embs, dtype=np.float32)
    span_arr = np.array([[s.start, s.end] for s in spans], dtype=np.int64).reshape(n, 2)
    block, covered = K.span_fill(tokens32, span_arr, total_frames)
    matrix = np.concatenate([acoustic32, block], axis=1)
    return FusedSequence(
        matrix=matrix,
        text_valid=covered.astype(bool),
        frame_valid=np.ones(total_frames, dtype=bool),
        d_audio=acoustic.shape[1],
        d_text=token_embs.shape[1],
    )


def check_posterior(p: np.ndarray, tol: float = POSTERIOR_TOL) -> None:
    """Raise unless every trailing-axis vector is a valid class posterior."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ArgumentError(f"posteriors must have 3 classes, got shape {arr.shape}")
    if np.any(arr < -tol) or np.any(arr > 1 + tol):
        raise ArgumentError("posterior entries outside [0, 1]")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ArgumentError(f"posteriors must sum to 1 within {tol}")


def late_fuse(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Average class posteriors elementwise: (a + b) / 2.

    Accepts single posteriors (shape [3]) or batches ([n, 3]); both arguments
    must be valid posteriors of the same shape.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ArgumentError(f"posterior shapes differ: {a.shape} vs {b.shape}")
    check_posterior(a)
    check_posterior(b)
    return (a + b) / 2.0
