"""Word-timestamp to frame-span conversion, boundary repair, proportional
subword allocation, and time-aware (TA / TA-PAD) positional-index plans.

Timing file layout (version 1): UTF-8 text, tab-separated, first line
``# mmfuse-timing v1``. One word per line::

    word  start_s  end_s  [pieces]

``pieces`` is optional: the word's subword tokens joined by ``|`` (defaults to
the whole word as a single token). Subword frame spans are allocated
proportionally to the character length of each piece.

Rounding conventions, pinned here because they matter downstream:
  * word start frames floor, end frames ceil, with a one-frame minimum;
  * interior subword boundaries use cumulative rounding, ties rounding half up;
  * divisions by the frame resolution tolerate ~1e-9 relative float error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

from .errors import AlignmentError, ArgumentError, FormatError

TIMING_HEADER = "# mmfuse-timing v1"

_REL_EPS = 1e-9


class DegenerateAllocationWarning(UserWarning):
    """A word span is shorter than its subword count; some spans are empty."""


@dataclass(frozen=True)
class WordTiming:
    word: str
    start_s: float
    end_s: float

    def check(self) -> None:
        if not (0.0 <= self.start_s < self.end_s):
            raise ArgumentError(f"word {self.word!r}: need 0 <= start < end, got [{self.start_s}, {self.end_s})")


@dataclass(frozen=True)
class FrameSpan:
    """Half-open frame interval [start, end)."""

    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start

    def check(self, total_frames: int) -> None:
        if not (0 <= self.start < self.end <= total_frames):
            raise ArgumentError(f"span [{self.start}, {self.end}) invalid for T={total_frames}")


@dataclass
class PositionPlan:
    """Token sequence with frame-scale positional indices; pads may be inserted."""

    tokens: list[str]
    position_index: list[int]
    is_pad: list[bool]


def _floor_div(x: float, res: float) -> int:
    q = x / res
    return int(math.floor(q + _REL_EPS * max(1.0, abs(q))))


def _ceil_div(x: float, res: float) -> int:
    q = x / res
    return int(math.ceil(q - _REL_EPS * max(1.0, abs(q))))


def frame_resolution(duration_s: float, frame_count: int) -> float:
    """Seconds per acoustic frame, derived from clip duration and frame count."""
    if not duration_s > 0:
        raise ArgumentError(f"duration_s must be > 0, got {duration_s}")
    if not frame_count >= 1:
        raise ArgumentError(f"frame_count must be >= 1, got {frame_count}")
    return duration_s / frame_count


def word_to_span(w: WordTiming, res: float, total_frames: int) -> FrameSpan:
    """Convert one word's timestamps to a frame span.

    start floors, end ceils with a one-frame minimum; both ends clamp to
    [0, total_frames]. A word starting at or beyond the end of the audio is an
    error.
    """
    w.check()
    if not res > 0:
        raise ArgumentError(f"resolution must be > 0, got {res}")
    start = _floor_div(w.start_s, res)
    if start >= total_frames:
        raise AlignmentError(
            f"word {w.word!r} starts at frame {start}, beyond the audio ({total_frames} frames)"
        )
    start = max(0, start)
    end = max(start + 1, _ceil_div(w.end_s, res))
    end = min(end, total_frames)
    span = FrameSpan(start, end)
    span.check(total_frames)
    return span


def fix_overlaps(spans: list[FrameSpan], total_frames: int) -> list[FrameSpan]:
    """Repair boundary overlaps so consecutive spans satisfy a.end <= b.start.

    A later span's start is clamped to its predecessor's end; a span emptied by
    clamping becomes the next single frame, cascading forward, with ends clamped
    to the frame count. Word order is preserved. Idempotent.
    """
    for s in spans:
        s.check(total_frames)
    repaired: list[FrameSpan] = []
    prev_end = 0
    for s in spans:
        start = max(s.start, prev_end)
        if start >= total_frames:
            raise AlignmentError(
                f"cannot repair overlaps: {len(spans)} words need more frames than the {total_frames} available"
            )
        end = s.end if s.end > start else start + 1
        end = min(end, total_frames)
        repaired.append(FrameSpan(start, end))
        prev_end = end
    return repaired


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def allocate_subword_spans(word_span: FrameSpan, char_lengths: list[int]) -> list[FrameSpan]:
    """Partition a word's frame span across its subword tokens, proportionally
    to character lengths.

    The output always partitions the input span exactly. When the span has at
    least one frame per subword, zero-length pieces are widened to one frame by
    stealing from the largest neighbor; otherwise empty spans are left in place
    and a DegenerateAllocationWarning is emitted (downstream treats them as
    covering nothing).
    """
    if not char_lengths:
        raise ArgumentError("char_lengths must be non-empty")
    if any(c < 1 for c in char_lengths):
        raise ArgumentError(f"char lengths must all be >= 1, got {char_lengths}")
    span_len = word_span.length
    if span_len < 1:
        raise ArgumentError(f"word span {word_span} has no frames")

    n = len(char_lengths)
    total = sum(char_lengths)
    cum = 0
    bounds = [0]
    for c in char_lengths[:-1]:
        cum += c
        b = _round_half_up(span_len * cum / total)
        bounds.append(max(b, bounds[-1]))
    bounds.append(span_len)
    lengths = [bounds[i + 1] - bounds[i] for i in range(n)]

    if span_len >= n:
        while 0 in lengths:
            i = lengths.index(0)
            left = lengths[i - 1] if i > 0 else -1
            right = lengths[i + 1] if i + 1 < n else -1
            if max(left, right) >= 2:
                donor = i - 1 if left >= right else i + 1
            else:
                # Both neighbors are single frames; take from the nearest piece
                # that has a surplus (one exists because span_len >= n).
                donor = -1
                for d in range(2, n):
                    if i - d >= 0 and lengths[i - d] >= 2:
                        donor = i - d
                        break
                    if i + d < n and lengths[i + d] >= 2:
                        donor = i + d
                        break
            lengths[donor] -= 1
            lengths[i] += 1
    elif any(l == 0 for l in lengths):
        warnings.warn(
            f"word span of {span_len} frames split across {n} subwords; some spans are empty",
            DegenerateAllocationWarning,
            stacklevel=2,
        )

    out = []
    pos = word_span.start
    for l in lengths:
        out.append(FrameSpan(pos, pos + l))
        pos += l
    return out


def compute_token_spans(
    timings: list[WordTiming],
    word_tokenization: list[list[str]],
    res: float,
    total_frames: int,
) -> tuple[list[FrameSpan], list[int]]:
    """Full alignment pipeline for one recording: word spans, overlap repair,
    then proportional subword allocation.

    Returns (token spans, word index per token), token order matching the
    concatenation of the per-word token lists.
    """
    if len(timings) != len(word_tokenization):
        raise ArgumentError(
            f"{len(timings)} timings but {len(word_tokenization)} token lists"
        )
    for wi, tokens in enumerate(word_tokenization):
        if not tokens:
            raise ArgumentError(f"word {timings[wi].word!r} has an empty token list")
    word_spans = [word_to_span(w, res, total_frames) for w in timings]
    word_spans = fix_overlaps(word_spans, total_frames)
    spans: list[FrameSpan] = []
    word_of_token: list[int] = []
    for wi, (span, tokens) in enumerate(zip(word_spans, word_tokenization)):
        pieces = allocate_subword_spans(span, [max(1, len(t)) for t in tokens])
        spans.extend(pieces)
        word_of_token.extend([wi] * len(pieces))
    return spans, word_of_token


def _token_start_indices(w: WordTiming, tokens: list[str], res: float) -> list[int]:
    """Token start times subdivide the word interval proportionally to
    character lengths, then map to frame indices."""
    if not tokens:
        raise ArgumentError(f"word {w.word!r} has an empty token list")
    chars = [max(1, len(t)) for t in tokens]
    total = sum(chars)
    dur = w.end_s - w.start_s
    out = []
    cum = 0
    for c in chars:
        t_start = w.start_s + dur * cum / total
        out.append(_floor_div(t_start, res))
        cum += c
    return out


def ta_position_plan(timings: list[WordTiming], word_tokenization: list[list[str]], res: float) -> PositionPlan:
    """Positional indices for the time-aware text variant: each token's index
    is its start time on the frame scale. No pads inserted."""
    if len(timings) != len(word_tokenization):
        raise ArgumentError(f"{len(timings)} timings but {len(word_tokenization)} token lists")
    tokens: list[str] = []
    index: list[int] = []
    prev = 0
    for w, toks in zip(timings, word_tokenization):
        w.check()
        for tok, idx in zip(toks, _token_start_indices(w, toks, res)):
            idx = max(idx, prev)
            tokens.append(tok)
            index.append(idx)
            prev = idx
    return PositionPlan(tokens, index, [False] * len(tokens))


def ta_pad_position_plan(
    timings: list[WordTiming],
    word_tokenization: list[list[str]],
    res: float,
    pad_token: str = "[PAD]",
) -> PositionPlan:
    """TA plan plus one pad token per inter-word silence of at least one frame,
    indexed at the silence onset (the previous word's end frame)."""
    if len(timings) != len(word_tokenization):
        raise ArgumentError(f"{len(timings)} timings but {len(word_tokenization)} token lists")
    tokens: list[str] = []
    index: list[int] = []
    is_pad: list[bool] = []
    prev = 0
    for wi, (w, toks) in enumerate(zip(timings, word_tokenization)):
        w.check()
        starts = _token_start_indices(w, toks, res)
        if wi > 0:
            pad_idx = _floor_div(timings[wi - 1].end_s, res)
            if starts[0] > pad_idx:
                pad_idx = max(pad_idx, prev)
                tokens.append(pad_token)
                index.append(pad_idx)
                is_pad.append(True)
                prev = pad_idx
        for tok, idx in zip(toks, starts):
            idx = max(idx, prev)
            tokens.append(tok)
            index.append(idx)
            is_pad.append(False)
            prev = idx
    return PositionPlan(tokens, index, is_pad)


def write_timing_file(
    path: str | Path,
    timings: list[WordTiming],
    pieces: list[list[str]] | None = None,
) -> None:
    lines = [TIMING_HEADER]
    for i, w in enumerate(timings):
        w.check()
        fields = [w.word, repr(float(w.start_s)), repr(float(w.end_s))]
        if pieces is not None and pieces[i] != [w.word]:
            fields.append("|".join(pieces[i]))
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_timing_file(path: str | Path) -> tuple[list[WordTiming], list[list[str]]]:
    """Returns (word timings, per-word token pieces). Empty timing files (header
    only) are valid and yield an all-silence recording."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != TIMING_HEADER:
        raise FormatError(f"{path}: missing timing header {TIMING_HEADER!r}")
    timings: list[WordTiming] = []
    pieces: list[list[str]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise FormatError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(parts)}")
        word = parts[0]
        try:
            start_s, end_s = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad timestamps") from exc
        w = WordTiming(word, start_s, end_s)
        w.check()
        timings.append(w)
        pieces.append(parts[3].split("|") if len(parts) == 4 else [word])
    return timings, pieces
