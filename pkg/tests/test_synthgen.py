import hashlib
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from mmfuse.alignment import read_timing_file
from mmfuse.errors import ArgumentError
from mmfuse.evaluation import Corpus
from mmfuse.synthgen import SynthParams, generate_corpus, rho_for_layer
from mmfuse.tensorio import largest_remainder_counts, read_manifest, validate_manifest


def tiny_params(**kw):
    base = dict(n_recordings=20, class_proportions=(1 / 3, 1 / 3, 1 / 3), frames=30,
                words_range=(3, 5), d_audio=12, d_text=12, n_layers=2, seed=9)
    base.update(kw)
    return SynthParams(**base)


def tree_digest(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestDeterminism:
    def test_byte_identical_rerun(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_corpus(tiny_params(), a)
        generate_corpus(tiny_params(), b)
        da, db = tree_digest(a), tree_digest(b)
        assert da == db

    def test_seed_changes_corpus(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_corpus(tiny_params(seed=1), a)
        generate_corpus(tiny_params(seed=2), b)
        assert tree_digest(a) != tree_digest(b)


class TestCorpusValidity:
    def test_manifest_validates_clean(self, small_corpus_dir):
        report = validate_manifest(small_corpus_dir / "manifest.tsv")
        assert report.ok, str(report)

    def test_word_timings_ordered_and_in_range(self, small_corpus_dir):
        entries = read_manifest(small_corpus_dir / "manifest.tsv")
        for e in entries[:20]:
            timings, pieces = read_timing_file(small_corpus_dir / e.timing_path)
            assert timings, "synthetic recordings always have words"
            prev_end = 0.0
            for w in timings:
                assert w.start_s >= prev_end  # strictly increasing, non-overlapping
                assert w.end_s > w.start_s
                prev_end = w.end_s
            assert prev_end <= 40 * 0.02 + 1e-9
            assert len(pieces) == len(timings)

    def test_class_counts_use_largest_remainder(self, small_corpus_dir):
        entries = read_manifest(small_corpus_dir / "manifest.tsv")
        counts = Counter(e.label for e in entries)
        expected = largest_remainder_counts(90, (1 / 3, 1 / 3, 1 / 3))
        assert [counts["CN"], counts["MCI"], counts["ADRD"]] == expected

    def test_table1_counts(self):
        assert largest_remainder_counts(1629, (0.570, 0.082, 0.347)) == [929, 134, 566]

    def test_ef_dataset_assembles(self, small_corpus):
        ds = small_corpus.dataset("EF", 1)
        assert len(ds) == 90
        assert ds.sequences[0].shape == (40, 32)

    def test_latents_align_with_manifest(self, small_corpus_dir):
        entries = read_manifest(small_corpus_dir / "manifest.tsv")
        with np.load(small_corpus_dir / "latents.npz") as z:
            assert list(z["ids"]) == [e.recording_id for e in entries]
            assert z["content"].shape == (90, 4)


class TestRhoRamp:
    def test_linear_ramp(self):
        p = tiny_params(n_layers=12, rho_min=0.0, rho_max=1.0)
        assert rho_for_layer(p, 1) == 0.0
        assert rho_for_layer(p, 12) == 1.0
        assert rho_for_layer(p, 7) == pytest.approx(6 / 11)

    def test_single_layer(self):
        p = tiny_params(n_layers=1, rho_min=0.3)
        assert rho_for_layer(p, 1) == pytest.approx(0.3)


def _probe_r2(root: Path, layer: int) -> float:
    """Out-of-sample R^2 of a linear probe from mean-pooled audio frames to the
    content vector; the probe is an independent least-squares fit."""
    corpus = Corpus.load(root / "manifest.tsv")
    ds = corpus.dataset("acoustic_only", layer)
    with np.load(root / "latents.npz") as z:
        content = z["content"]
    pooled = np.stack([s.mean(axis=0) for s in ds.sequences]).astype(np.float64)
    n = len(ds)
    half = n // 2
    x = np.concatenate([pooled, np.ones((n, 1))], axis=1)
    coef, *_ = np.linalg.lstsq(x[:half], content[:half], rcond=None)
    pred = x[half:] @ coef
    resid = content[half:] - pred
    ss_res = float((resid**2).sum())
    ss_tot = float(((content[half:] - content[:half].mean(axis=0)) ** 2).sum())
    return 1.0 - ss_res / ss_tot


class TestRedundancyDial:
    def test_rho_zero_audio_carries_no_content(self, tmp_path):
        params = tiny_params(n_recordings=160, rho_min=0.0, rho_max=0.0,
                             noise_sigma=0.0, n_layers=1, d_audio=16, d_text=16)
        generate_corpus(params, tmp_path)
        assert _probe_r2(tmp_path, 1) < 0.2

    def test_rho_one_audio_contains_content_image(self, tmp_path):
        params = tiny_params(n_recordings=160, rho_min=1.0, rho_max=1.0,
                             noise_sigma=0.0, n_layers=1, d_audio=16, d_text=16)
        generate_corpus(params, tmp_path)
        assert _probe_r2(tmp_path, 1) >= 0.9


class TestParamValidation:
    def test_bad_proportions(self):
        with pytest.raises(ArgumentError):
            generate_corpus(tiny_params(class_proportions=(0.5, 0.2, 0.2)), "/tmp/never")

    def test_words_exceed_frames(self):
        with pytest.raises(ArgumentError):
            tiny_params(frames=4, words_range=(3, 5)).validate()

    def test_bad_rho(self):
        with pytest.raises(ArgumentError):
            tiny_params(rho_max=1.5).validate()
