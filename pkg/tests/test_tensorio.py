import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfuse.errors import FormatError, ValidationError
from mmfuse.tensorio import (
    HEADER_SIZE,
    MAGIC,
    EmbeddingContainer,
    RecordingManifestEntry,
    largest_remainder_counts,
    read_container,
    read_container_file,
    read_manifest,
    validate_manifest,
    write_container,
    write_container_file,
    write_manifest,
)


def make_container(rows=2, cols=3, kind="acoustic", seed=0, **kw):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(rows, cols)).astype(np.float32)
    if kind == "acoustic":
        kw.setdefault("layer_index", 3)
        kw.setdefault("duration_s", rows * 0.02)
    return EmbeddingContainer(kind, data, **kw)


def test_zero_matrix_layout():
    c = EmbeddingContainer("acoustic", np.zeros((2, 3), dtype=np.float32), layer_index=1, duration_s=1.0)
    raw = write_container(c)
    assert raw[:8] == MAGIC
    assert len(raw) == HEADER_SIZE + 24
    assert raw[HEADER_SIZE:] == b"\x00" * 24


@settings(max_examples=60, deadline=None)
@given(rows=st.integers(1, 20), cols=st.integers(1, 8), seed=st.integers(0, 10_000),
       kind=st.sampled_from(["acoustic", "text", "fused"]))
def test_round_trip_identity(rows, cols, seed, kind):
    c = make_container(rows, cols, kind, seed)
    back = read_container(write_container(c))
    assert back.kind == c.kind
    assert back.layer_index == c.layer_index
    assert back.duration_s == pytest.approx(c.duration_s) if c.duration_s else back.duration_s is None
    assert back.data.dtype == np.float32
    assert np.array_equal(back.data, c.data)  # bit-exact
    # serialization of the round-tripped container is byte-identical
    assert write_container(back) == write_container(c)


def test_payload_length_mismatch_rejected():
    raw = write_container(make_container(2, 3))
    with pytest.raises(FormatError):
        read_container(raw[:-4])  # truncated payload
    with pytest.raises(FormatError):
        read_container(raw + b"\x00\x00\x00\x00")  # trailing bytes


def test_bad_magic():
    raw = bytearray(write_container(make_container()))
    raw[:8] = b"NOTMAGIC"
    with pytest.raises(FormatError, match="magic"):
        read_container(bytes(raw))


def test_unsupported_version():
    raw = bytearray(write_container(make_container()))
    raw[8] = 99
    with pytest.raises(FormatError, match="version"):
        read_container(bytes(raw))


def test_nan_payload_rejected():
    c = make_container(2, 3)
    c.data[1, 1] = np.nan
    raw = write_container(c)
    with pytest.raises(ValidationError, match="NaN"):
        read_container(raw)


def test_inf_payload_rejected():
    c = make_container(2, 3)
    c.data[0, 0] = np.inf
    with pytest.raises(ValidationError):
        read_container(write_container(c))


def test_container_invariants():
    with pytest.raises(ValidationError):
        write_container(EmbeddingContainer("acoustic", np.zeros((0, 3), dtype=np.float32), 1, 1.0))
    with pytest.raises(ValidationError):
        write_container(EmbeddingContainer("acoustic", np.zeros((2, 3), dtype=np.float32), 1, None))
    with pytest.raises(ValidationError):
        write_container(EmbeddingContainer("acoustic", np.zeros((2, 3), dtype=np.float32), 13, 1.0))
    with pytest.raises(ValidationError):
        write_container(EmbeddingContainer("bogus", np.zeros((2, 3), dtype=np.float32)))
    # text containers carry no layer index
    with pytest.raises(ValidationError):
        write_container(EmbeddingContainer("text", np.zeros((2, 3), dtype=np.float32), layer_index=2))


def _corpus_on_disk(tmp_path, n=3, layers=(1, 2), cols=8, text_cols=8):
    entries = []
    for i in range(n):
        rid = f"r{i:03d}"
        acoustic_paths = {}
        for layer in layers:
            rel = f"{rid}.l{layer}.emb"
            write_container_file(
                EmbeddingContainer("acoustic", np.ones((4, cols), dtype=np.float32), layer, 0.08),
                tmp_path / rel,
            )
            acoustic_paths[layer] = rel
        write_container_file(
            EmbeddingContainer("text", np.ones((2, text_cols), dtype=np.float32)), tmp_path / f"{rid}.temb"
        )
        (tmp_path / f"{rid}.tsv").write_text("# mmfuse-timing v1\n")
        entries.append(
            RecordingManifestEntry(rid, "CN", "F", 70, "corpusA", acoustic_paths,
                                   f"{rid}.temb", f"{rid}.tsv")
        )
    path = tmp_path / "manifest.tsv"
    write_manifest(entries, path)
    return path, entries


def test_manifest_round_trip(tmp_path):
    path, entries = _corpus_on_disk(tmp_path)
    back = read_manifest(path)
    assert back == entries


def test_validate_manifest_ok(tmp_path):
    path, _ = _corpus_on_disk(tmp_path)
    report = validate_manifest(path)
    assert report.ok
    assert report.failures == []


def test_validate_manifest_missing_layer(tmp_path):
    path, entries = _corpus_on_disk(tmp_path)
    # drop layer 2 from one entry
    entries[1].acoustic_paths.pop(2)
    write_manifest(entries, path)
    report = validate_manifest(path)
    assert not report.ok
    assert any(rid == "r001" and "layer 2" in msg for rid, msg in report.failures)


def test_validate_manifest_dim_mismatch(tmp_path):
    path, entries = _corpus_on_disk(tmp_path)
    write_container_file(
        EmbeddingContainer("acoustic", np.ones((4, 5), dtype=np.float32), 1, 0.08),
        tmp_path / entries[2].acoustic_paths[1],
    )
    report = validate_manifest(path)
    assert any(rid == "r002" and "dimension" in msg for rid, msg in report.failures)


def test_validate_manifest_missing_file(tmp_path):
    path, entries = _corpus_on_disk(tmp_path)
    (tmp_path / entries[0].text_path).unlink()
    report = validate_manifest(path)
    assert any(rid == "r000" and "not found" in msg for rid, msg in report.failures)


def test_validate_manifest_order_independent(tmp_path):
    path, entries = _corpus_on_disk(tmp_path, n=4)
    entries[1].acoustic_paths.pop(2)
    write_manifest(entries, path)
    first = validate_manifest(path).failures
    write_manifest(list(reversed(entries)), path)
    second = validate_manifest(path).failures
    assert first == second


def test_read_container_file_round_trip(tmp_path):
    c = make_container(5, 4)
    write_container_file(c, tmp_path / "x.emb")
    back = read_container_file(tmp_path / "x.emb")
    assert np.array_equal(back.data, c.data)


def test_largest_remainder_counts():
    assert largest_remainder_counts(1629, (0.570, 0.082, 0.347)) == [929, 134, 566]
    assert largest_remainder_counts(25, (0.64, 0.16, 0.20)) == [16, 4, 5]
    assert largest_remainder_counts(1, (0.64, 0.16, 0.20)) == [1, 0, 0]
    assert sum(largest_remainder_counts(17, (1 / 3, 1 / 3, 1 / 3))) == 17
