"""Binary embedding containers and the corpus manifest.

Container layout (version 1, all integers little-endian)::

    offset  size  field
    0       8     magic, the ASCII bytes "MMFUSE01"
    8       4     format version, uint32 (currently 1)
    12      1     kind, uint8: 1 = acoustic, 2 = text, 3 = fused
    13      1     has_layer, uint8 (0 or 1)
    14      2     reserved, must be 0
    16      4     layer_index, uint32 (0 when has_layer = 0)
    20      4     rows, uint32 (frame count T or token count N)
    24      4     cols, uint32 (embedding width D)
    28      8     duration_s, float64 (0.0 when absent)
    36      ...   payload: rows * cols float32 values, row-major

Manifest layout (version 1): UTF-8 text, tab-separated. The first line is the
header ``# mmfuse-manifest v1``. Every following non-comment line has exactly
eight fields, in this order::

    recording_id  label  sex  age  corpus_id  acoustic_paths  text_path  timing_path

``label`` is one of CN/MCI/ADRD, ``sex`` one of M/F, ``age`` an integer.
``acoustic_paths`` is a comma-separated list of ``layer=path`` pairs with layer
in 1..12. Paths are relative to the manifest's directory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import LABELS
from .errors import ArgumentError, FormatError, ValidationError

MAGIC = b"MMFUSE01"
CONTAINER_VERSION = 1
MANIFEST_HEADER = "# mmfuse-manifest v1"
HEADER_SIZE = 36
_HEADER_STRUCT = struct.Struct("<8sIBBHIIId")

KINDS = ("acoustic", "text", "fused")
_KIND_CODES = {"acoustic": 1, "text": 2, "fused": 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

MIN_LAYER = 1
MAX_LAYER = 12


@dataclass
class EmbeddingContainer:
    """One embedding matrix plus the metadata needed to align and fuse it."""

    kind: str
    data: np.ndarray  # [rows, cols] float32
    layer_index: int | None = None
    duration_s: float | None = None

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    def check(self) -> None:
        """Raise if any container invariant is violated."""
        if self.kind not in KINDS:
            raise ValidationError(f"unknown container kind {self.kind!r}")
        if self.data.ndim != 2:
            raise ValidationError(f"payload must be a 2-d matrix, got ndim={self.data.ndim}")
        if self.rows < 1 or self.cols < 1:
            raise ValidationError(f"container must have rows >= 1 and cols >= 1, got {self.data.shape}")
        if self.layer_index is not None and not (MIN_LAYER <= self.layer_index <= MAX_LAYER):
            raise ValidationError(f"layer_index {self.layer_index} outside {MIN_LAYER}..{MAX_LAYER}")
        if self.kind == "acoustic":
            if self.duration_s is None or not self.duration_s > 0:
                raise ValidationError("acoustic containers require duration_s > 0")
        if self.kind == "text" and self.layer_index is not None:
            raise ValidationError("text containers carry no layer_index")


def write_container(c: EmbeddingContainer) -> bytes:
    """Serialize a container to its byte-exact on-disk form."""
    c.check()
    payload = np.ascontiguousarray(c.data, dtype="<f4")
    if payload.size != c.rows * c.cols:
        raise FormatError("payload size disagrees with rows * cols")
    header = _HEADER_STRUCT.pack(
        MAGIC,
        CONTAINER_VERSION,
        _KIND_CODES[c.kind],
        0 if c.layer_index is None else 1,
        0,
        0 if c.layer_index is None else c.layer_index,
        c.rows,
        c.cols,
        0.0 if c.duration_s is None else float(c.duration_s),
    )
    return header + payload.tobytes()


def read_container(raw: bytes) -> EmbeddingContainer:
    """Parse container bytes. Raises rather than returning partial results."""
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"container too short for header: {len(raw)} bytes")
    magic, version, kind_code, has_layer, reserved, layer_index, rows, cols, duration_s = _HEADER_STRUCT.unpack(
        raw[:HEADER_SIZE]
    )
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported container version {version}")
    if kind_code not in _CODE_KINDS:
        raise FormatError(f"unknown kind code {kind_code}")
    if reserved != 0:
        raise FormatError("reserved header bytes must be zero")
    expected = HEADER_SIZE + rows * cols * 4
    if len(raw) != expected:
        raise FormatError(f"payload length mismatch: expected {expected} bytes total, got {len(raw)}")
    payload = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).reshape(rows, cols).copy()
    if not np.isfinite(payload).all():
        raise ValidationError("payload contains NaN or Inf")
    c = EmbeddingContainer(
        kind=_CODE_KINDS[kind_code],
        data=payload,
        layer_index=int(layer_index) if has_layer else None,
        duration_s=float(duration_s) if duration_s != 0.0 else None,
    )
    c.check()
    return c


def write_container_file(c: EmbeddingContainer, path: str | Path) -> None:
    Path(path).write_bytes(write_container(c))


def read_container_file(path: str | Path) -> EmbeddingContainer:
    return read_container(Path(path).read_bytes())


@dataclass
class RecordingManifestEntry:
    recording_id: str
    label: str
    sex: str
    age: int
    corpus_id: str
    acoustic_paths: dict[int, str]
    text_path: str
    timing_path: str

    def check(self) -> None:
        if not self.recording_id:
            raise ValidationError("empty recording_id")
        if self.label not in LABELS:
            raise ValidationError(f"{self.recording_id}: label {self.label!r} not in {LABELS}")
        if self.sex not in ("M", "F"):
            raise ValidationError(f"{self.recording_id}: sex {self.sex!r} not in (M, F)")
        if not self.corpus_id:
            raise ValidationError(f"{self.recording_id}: empty corpus_id")
        bad = [k for k in self.acoustic_paths if not (MIN_LAYER <= k <= MAX_LAYER)]
        if bad:
            raise ValidationError(f"{self.recording_id}: layer keys {bad} outside {MIN_LAYER}..{MAX_LAYER}")


def write_manifest(entries: list[RecordingManifestEntry], path: str | Path) -> None:
    lines = [MANIFEST_HEADER]
    for e in entries:
        e.check()
        acoustic = ",".join(f"{layer}={p}" for layer, p in sorted(e.acoustic_paths.items()))
        lines.append(
            "\t".join(
                [e.recording_id, e.label, e.sex, str(e.age), e.corpus_id, acoustic, e.text_path, e.timing_path]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> list[RecordingManifestEntry]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise FormatError(f"{path}: missing manifest header {MANIFEST_HEADER!r}")
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 8:
            raise FormatError(f"{path}:{lineno}: expected 8 tab-separated fields, got {len(parts)}")
        rec_id, label, sex, age, corpus_id, acoustic, text_path, timing_path = parts
        acoustic_paths: dict[int, str] = {}
        if acoustic:
            for pair in acoustic.split(","):
                if "=" not in pair:
                    raise FormatError(f"{path}:{lineno}: bad acoustic_paths entry {pair!r}")
                layer_s, p = pair.split("=", 1)
                try:
                    layer = int(layer_s)
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: non-integer layer {layer_s!r}") from exc
                acoustic_paths[layer] = p
        try:
            age_i = int(age)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer age {age!r}") from exc
        entry = RecordingManifestEntry(rec_id, label, sex, age_i, corpus_id, acoustic_paths, text_path, timing_path)
        entry.check()
        entries.append(entry)
    return entries


@dataclass
class ValidationReport:
    """Per-entry failures found while validating a corpus. Empty list <=> usable."""

    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def add(self, recording_id: str, message: str) -> None:
        self.failures.append((recording_id, message))

    def __str__(self) -> str:
        if self.ok:
            return "manifest OK"
        return "\n".join(f"{rid}: {msg}" for rid, msg in self.failures)


def validate_manifest(path: str | Path, base_dir: str | Path | None = None) -> ValidationReport:
    """Check that every referenced file exists, parses, and is dimensionally
    consistent with the rest of the corpus.

    The report is deterministic and independent of entry order: failures are
    sorted by (recording_id, message).
    """
    path = Path(path)
    base = Path(base_dir) if base_dir is not None else path.parent
    entries = read_manifest(path)
    report = ValidationReport()

    # Corpus-wide expectations: union of layer keys, modal column widths.
    all_layers: set[int] = set()
    for e in entries:
        all_layers.update(e.acoustic_paths)

    acoustic_cols: dict[str, int] = {}
    text_cols: dict[str, int] = {}

    for e in entries:
        for layer in sorted(all_layers - set(e.acoustic_paths)):
            report.add(e.recording_id, f"missing acoustic layer {layer}")
        for layer, rel in sorted(e.acoustic_paths.items()):
            p = base / rel
            if not p.is_file():
                report.add(e.recording_id, f"acoustic layer {layer}: file not found: {rel}")
                continue
            try:
                c = read_container_file(p)
            except (FormatError, ValidationError) as exc:
                report.add(e.recording_id, f"acoustic layer {layer}: {exc}")
                continue
            if c.kind != "acoustic":
                report.add(e.recording_id, f"acoustic layer {layer}: container kind is {c.kind}")
            acoustic_cols[f"{e.recording_id}/l{layer}"] = c.cols
        tp = base / e.text_path
        if not tp.is_file():
            report.add(e.recording_id, f"text: file not found: {e.text_path}")
        else:
            try:
                c = read_container_file(tp)
                if c.kind != "text":
                    report.add(e.recording_id, f"text: container kind is {c.kind}")
                text_cols[e.recording_id] = c.cols
            except (FormatError, ValidationError) as exc:
                report.add(e.recording_id, f"text: {exc}")
        if not (base / e.timing_path).is_file():
            report.add(e.recording_id, f"timing: file not found: {e.timing_path}")

    for cols_by_key, modality in ((acoustic_cols, "acoustic"), (text_cols, "text")):
        if not cols_by_key:
            continue
        counts: dict[int, int] = {}
        for c in cols_by_key.values():
            counts[c] = counts.get(c, 0) + 1
        majority = max(sorted(counts), key=lambda c: counts[c])
        for key, c in sorted(cols_by_key.items()):
            if c != majority:
                rid = key.split("/")[0]
                report.add(rid, f"{modality} dimension inconsistency: cols={c}, corpus majority {majority}")

    report.failures.sort()
    return report


def largest_remainder_counts(n: int, proportions) -> list[int]:
    """Split n items into integer counts matching proportions, largest-remainder
    rounding, remainder ties broken toward earlier positions."""
    props = [float(p) for p in proportions]
    if n < 0 or any(p < 0 for p in props):
        raise ArgumentError("largest_remainder_counts needs n >= 0 and proportions >= 0")
    quotas = [n * p for p in props]
    counts = [int(np.floor(q)) for q in quotas]
    short = n - sum(counts)
    if short < 0:
        raise ArgumentError(f"proportions sum to more than 1: {sum(props)}")
    order = sorted(range(len(props)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts
