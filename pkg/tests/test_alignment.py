import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfuse.alignment import (
    DegenerateAllocationWarning,
    FrameSpan,
    WordTiming,
    allocate_subword_spans,
    compute_token_spans,
    fix_overlaps,
    frame_resolution,
    read_timing_file,
    ta_pad_position_plan,
    ta_position_plan,
    word_to_span,
    write_timing_file,
)
from mmfuse.errors import AlignmentError, ArgumentError


class TestFrameResolution:
    def test_paper_rate(self):
        assert frame_resolution(30.0, 1500) == pytest.approx(0.02, abs=0)

    def test_direct_division(self):
        assert frame_resolution(10.0, 500) == pytest.approx(0.02)

    def test_zero_frames(self):
        with pytest.raises(ArgumentError):
            frame_resolution(30.0, 0)

    def test_nonpositive_duration(self):
        with pytest.raises(ArgumentError):
            frame_resolution(0.0, 100)


class TestWordToSpan:
    def test_exact_division(self):
        span = word_to_span(WordTiming("w", 1.00, 1.50), 0.02, 1500)
        assert (span.start, span.end) == (50, 75)

    def test_one_frame_minimum(self):
        span = word_to_span(WordTiming("w", 0.011, 0.012), 0.02, 1500)
        assert (span.start, span.end) == (0, 1)

    def test_clamp_to_total(self):
        span = word_to_span(WordTiming("w", 29.99, 30.20), 0.02, 1500)
        assert (span.start, span.end) == (1499, 1500)

    def test_word_beyond_audio(self):
        with pytest.raises(AlignmentError):
            word_to_span(WordTiming("w", 30.0, 30.5), 0.02, 1500)

    def test_bad_resolution(self):
        with pytest.raises(ArgumentError):
            word_to_span(WordTiming("w", 0.0, 1.0), 0.0, 100)

    def test_bad_timing(self):
        with pytest.raises(ArgumentError):
            word_to_span(WordTiming("w", 1.0, 1.0), 0.02, 100)


class TestFixOverlaps:
    def test_simple_clamp(self):
        out = fix_overlaps([FrameSpan(0, 50), FrameSpan(48, 80)], 100)
        assert [(s.start, s.end) for s in out] == [(0, 50), (50, 80)]

    def test_already_monotone_unchanged(self):
        spans = [FrameSpan(0, 50), FrameSpan(50, 80)]
        assert fix_overlaps(spans, 100) == spans

    def test_cascade(self):
        out = fix_overlaps([FrameSpan(0, 5), FrameSpan(4, 5), FrameSpan(4, 6)], 10)
        assert [(s.start, s.end) for s in out] == [(0, 5), (5, 6), (6, 7)]

    def test_unrepairable(self):
        with pytest.raises(AlignmentError):
            fix_overlaps([FrameSpan(0, 2), FrameSpan(1, 2), FrameSpan(1, 2)], 2)

    def test_idempotent(self):
        spans = [FrameSpan(0, 5), FrameSpan(4, 5), FrameSpan(4, 6), FrameSpan(5, 9)]
        once = fix_overlaps(spans, 20)
        assert fix_overlaps(once, 20) == once

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10_000))
    def test_property_monotone_nonempty_inrange(self, seed):
        rng = np.random.default_rng(seed)
        total = int(rng.integers(20, 200))
        n = int(rng.integers(1, min(15, total)))
        starts = np.sort(rng.integers(0, total, size=n))
        spans = []
        for j, s in enumerate(starts):
            # Cap ends so the forward cascade always has room (repairable input).
            cap = total - (n - 1 - j)
            start = int(min(s, cap - 1))
            end = int(min(start + rng.integers(1, 12), cap))
            spans.append(FrameSpan(start, max(end, start + 1)))
        out = fix_overlaps(spans, total)
        assert len(out) == n
        prev_end = 0
        for s in out:
            assert prev_end <= s.start < s.end <= total
            prev_end = s.end
        assert fix_overlaps(out, total) == out


class TestAllocateSubwords:
    def test_proportional(self):
        out = allocate_subword_spans(FrameSpan(100, 110), [3, 7])
        assert [(s.start, s.end) for s in out] == [(100, 103), (103, 110)]

    def test_symmetric(self):
        out = allocate_subword_spans(FrameSpan(0, 8), [4, 4])
        assert [(s.start, s.end) for s in out] == [(0, 4), (4, 8)]

    def test_rounded_thirds(self):
        out = allocate_subword_spans(FrameSpan(0, 7), [1, 1, 1])
        assert [(s.start, s.end) for s in out] == [(0, 2), (2, 5), (5, 7)]

    def test_widening_steals_from_largest_neighbor(self):
        out = allocate_subword_spans(FrameSpan(0, 3), [1, 10, 1])
        lengths = [s.end - s.start for s in out]
        assert lengths == [1, 1, 1]
        assert out[0].start == 0 and out[-1].end == 3

    def test_degenerate_warns_and_partitions(self):
        with pytest.warns(DegenerateAllocationWarning):
            out = allocate_subword_spans(FrameSpan(0, 2), [1, 1, 1])
        assert sum(s.end - s.start for s in out) == 2
        assert out[0].start == 0 and out[-1].end == 2

    def test_bad_arguments(self):
        with pytest.raises(ArgumentError):
            allocate_subword_spans(FrameSpan(0, 5), [])
        with pytest.raises(ArgumentError):
            allocate_subword_spans(FrameSpan(0, 5), [2, 0])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10_000))
    def test_property_exact_partition(self, seed):
        rng = np.random.default_rng(seed)
        start = int(rng.integers(0, 50))
        length = int(rng.integers(1, 60))
        n = int(rng.integers(1, 8))
        chars = [int(c) for c in rng.integers(1, 12, size=n)]
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateAllocationWarning)
            out = allocate_subword_spans(FrameSpan(start, start + length), chars)
        assert out[0].start == start
        assert out[-1].end == start + length
        for a, b in zip(out, out[1:]):
            assert a.end == b.start  # contiguous, no gaps or overlaps
        assert sum(s.end - s.start for s in out) == length  # frames conserved
        if length >= n:
            assert all(s.end - s.start >= 1 for s in out)


class TestPositionPlans:
    def test_ta_direct_mapping(self):
        plan = ta_position_plan(
            [WordTiming("a", 1.0, 1.2), WordTiming("b", 2.0, 2.3)], [["a"], ["b"]], 0.02
        )
        assert plan.position_index == [50, 100]
        assert plan.is_pad == [False, False]

    def test_ta_proportional_subdivision(self):
        plan = ta_position_plan([WordTiming("xxyy", 1.0, 1.4)], [["xx", "yy"]], 0.02)
        assert plan.position_index == [50, 60]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_ta_nondecreasing(self, seed):
        rng = np.random.default_rng(seed)
        t = 0.0
        timings, toks = [], []
        for _ in range(int(rng.integers(1, 8))):
            t += float(rng.uniform(0.0, 0.5))
            dur = float(rng.uniform(0.05, 0.6))
            timings.append(WordTiming("w", t, t + dur))
            toks.append(["w"] * int(rng.integers(1, 4)))
            t += dur
        plan = ta_position_plan(timings, toks, 0.02)
        assert all(a <= b for a, b in zip(plan.position_index, plan.position_index[1:]))

    def test_ta_empty_tokens_error(self):
        with pytest.raises(ArgumentError):
            ta_position_plan([WordTiming("a", 0.0, 0.5)], [[]], 0.02)

    def test_ta_pad_inserts_at_silence_onset(self):
        plan = ta_pad_position_plan(
            [WordTiming("a", 1.0, 1.2), WordTiming("b", 2.0, 2.3)], [["a"], ["b"]], 0.02
        )
        assert plan.tokens[1] == "[PAD]"
        assert plan.position_index == [50, 60, 100]
        assert plan.is_pad == [False, True, False]

    def test_ta_pad_zero_gap_no_pad(self):
        plan = ta_pad_position_plan(
            [WordTiming("a", 1.0, 1.2), WordTiming("b", 1.2, 1.5)], [["a"], ["b"]], 0.02
        )
        assert plan.is_pad == [False, False]

    def test_ta_pad_single_word_matches_ta(self):
        timings, toks = [WordTiming("abcd", 0.2, 0.8)], [["ab", "cd"]]
        pad_plan = ta_pad_position_plan(timings, toks, 0.02)
        ta_plan = ta_position_plan(timings, toks, 0.02)
        assert pad_plan.tokens == ta_plan.tokens
        assert pad_plan.position_index == ta_plan.position_index

    def test_pad_flag_implies_pad_token(self):
        plan = ta_pad_position_plan(
            [WordTiming("a", 0.0, 0.1), WordTiming("b", 1.0, 1.1)], [["a"], ["b"]], 0.02,
            pad_token="<pad>",
        )
        for tok, is_pad in zip(plan.tokens, plan.is_pad):
            assert (tok == "<pad>") == is_pad


class TestComputeTokenSpans:
    def test_pipeline_conserves_frames(self):
        timings = [WordTiming("abba", 0.0, 0.2), WordTiming("zo", 0.18, 0.4)]
        pieces = [["ab", "ba"], ["zo"]]
        spans, word_of = compute_token_spans(timings, pieces, 0.02, 30)
        assert word_of == [0, 0, 1]
        prev = 0
        for s in spans:
            assert prev <= s.start <= s.end
            prev = s.end

    def test_length_mismatch(self):
        with pytest.raises(ArgumentError):
            compute_token_spans([WordTiming("a", 0, 0.1)], [["a"], ["b"]], 0.02, 10)


class TestTimingFile:
    def test_round_trip(self, tmp_path):
        timings = [WordTiming("hello", 0.10, 0.55), WordTiming("world", 0.60, 1.00)]
        pieces = [["hel", "lo"], ["world"]]
        path = tmp_path / "t.tsv"
        write_timing_file(path, timings, pieces)
        back_t, back_p = read_timing_file(path)
        assert back_t == timings
        assert back_p == pieces

    def test_empty_file_valid(self, tmp_path):
        path = tmp_path / "t.tsv"
        write_timing_file(path, [])
        timings, pieces = read_timing_file(path)
        assert timings == [] and pieces == []

    def test_missing_header(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("word\t0.0\t1.0\n")
        from mmfuse.errors import FormatError
        with pytest.raises(FormatError):
            read_timing_file(path)
