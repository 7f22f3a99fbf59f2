"""Bit-exact readers and writers for the toolkit's file formats.

Formats
-------
MMFS feature container (binary, little-endian):
    magic "MMFS" | version u32 = 1 | modality u8 (0 video, 1 audio, 2 fused)
    | L u64 | d u64 | start_offset f64 | hop f64 | window f64
    | payload: L*d float32, row-major.
    Payloads are stored in 32-bit (typical extractor output) and promoted
    to 64-bit in memory; all toolkit math runs in 64-bit.

Proposal / annotation records (UTF-8 text, one JSON object per line):
    {"video_id": str, "t_start": num, "t_end": num, "label": str, "score": num}
    Ground-truth records are identical minus "score".  Record order is
    preserved; one object per line supports streaming large files.

Evaluation reports reuse the same record style (see write_report).

MMCK checkpoint container (binary, little-endian):
    magic "MMCK" | version u32 = 1 | meta_len u32 | meta JSON (UTF-8)
    | n_sections u32 | per section: name_len u16, name UTF-8, ndim u8,
    dims u64*ndim, payload float64.
    One array per section; the header of each section lists its shape.

Readers and writers share no state; concurrent reads of one file are safe.
"""

import json
import struct
from collections.abc import Iterable, Mapping

import numpy as np

from .core import (
    FeatureSequence,
    GroundTruth,
    Modality,
    Proposal,
    ProposalSet,
    Segment,
    SnippetTiming,
    ValidationError,
)

__all__ = [
    "FormatError",
    "TruncatedError",
    "RecordError",
    "read_features",
    "write_features",
    "read_proposals",
    "write_proposals",
    "read_ground_truth",
    "write_ground_truth",
    "read_report",
    "write_report",
    "read_checkpoint",
    "write_checkpoint",
]

MAGIC_FEATURES = b"MMFS"
MAGIC_CHECKPOINT = b"MMCK"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIBQQddd")
_MODALITY_CODES = {Modality.VIDEO: 0, Modality.AUDIO: 1, Modality.FUSED: 2}
_CODE_MODALITIES = {v: k for k, v in _MODALITY_CODES.items()}

_PROPOSAL_FIELDS = ("video_id", "t_start", "t_end", "label", "score")
_GROUND_TRUTH_FIELDS = ("video_id", "t_start", "t_end", "label")


class FormatError(ValueError):
    """File violates the container layout (bad magic, version, structure)."""


class TruncatedError(FormatError):
    """Payload is shorter than the header promises."""


class RecordError(FormatError):
    """A text record is malformed; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# MMFS feature container
# ---------------------------------------------------------------------------


def read_features(path) -> FeatureSequence:
    """Read an MMFS file into a FeatureSequence (64-bit working precision)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, mod_code, length, dim, start_offset, hop, window = _HEADER.unpack(
        raw[: _HEADER.size]
    )
    if magic != MAGIC_FEATURES:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC_FEATURES!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if mod_code not in _CODE_MODALITIES:
        raise FormatError(f"{path}: unknown modality code {mod_code}")
    if length < 1 or dim < 1:
        raise FormatError(f"{path}: header requires L >= 1 and d >= 1, got L={length}, d={dim}")
    expected = length * dim * 4
    payload = raw[_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedError(
            f"{path}: payload has {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(length, dim)
    if not np.isfinite(data).all():
        raise ValidationError(f"{path}: payload contains non-finite values")
    timing = SnippetTiming(start_offset=start_offset, hop=hop, window=window)
    return FeatureSequence(
        modality=_CODE_MODALITIES[mod_code], data=data.astype(np.float64), timing=timing
    )


def write_features(seq: FeatureSequence, path) -> None:
    """Write a FeatureSequence as an MMFS file readable by read_features."""
    data32 = seq.data.astype("<f4")
    if not np.isfinite(data32).all():
        raise ValidationError("feature values overflow 32-bit storage precision")
    header = _HEADER.pack(
        MAGIC_FEATURES,
        FORMAT_VERSION,
        _MODALITY_CODES[seq.modality],
        seq.length,
        seq.dim,
        seq.timing.start_offset,
        seq.timing.hop,
        seq.timing.window,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data32.tobytes(order="C"))


# ---------------------------------------------------------------------------
# Newline-delimited proposal / annotation records
# ---------------------------------------------------------------------------


def _parse_line(line: str, lineno: int, fields: tuple[str, ...]) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(lineno, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise RecordError(lineno, "record is not an object")
    missing = [f for f in fields if f not in obj]
    if missing:
        raise RecordError(lineno, f"missing field(s) {missing}")
    extra = [k for k in obj if k not in fields]
    if extra:
        raise RecordError(lineno, f"unexpected field(s) {extra}")
    for key in ("video_id", "label"):
        if not isinstance(obj[key], str):
            raise RecordError(lineno, f"field {key!r} must be a string")
    for key in fields:
        if key in ("video_id", "label"):
            continue
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise RecordError(lineno, f"field {key!r} must be a number")
    if obj["t_start"] >= obj["t_end"]:
        raise RecordError(lineno, f"t_start {obj['t_start']} >= t_end {obj['t_end']}")
    return obj


def read_proposals(path) -> list[ProposalSet]:
    """Read proposal records, grouped per video in first-seen order.

    Within each ProposalSet the file order is preserved.
    """
    grouped: dict[str, list[Proposal]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = _parse_line(line, lineno, _PROPOSAL_FIELDS)
            try:
                prop = Proposal(
                    t_start=float(obj["t_start"]),
                    t_end=float(obj["t_end"]),
                    label=obj["label"],
                    score=float(obj["score"]),
                )
            except ValidationError as exc:
                raise RecordError(lineno, str(exc)) from exc
            grouped.setdefault(obj["video_id"], []).append(prop)
    return [ProposalSet(video_id=vid, proposals=tuple(props)) for vid, props in grouped.items()]


def write_proposals(sets: ProposalSet | Iterable[ProposalSet], path) -> None:
    """Write one or more ProposalSets as newline-delimited records."""
    if isinstance(sets, ProposalSet):
        sets = [sets]
    with open(path, "w", encoding="utf-8") as fh:
        for pset in sets:
            for p in pset:
                record = {
                    "video_id": pset.video_id,
                    "t_start": p.t_start,
                    "t_end": p.t_end,
                    "label": p.label,
                    "score": p.score,
                }
                fh.write(json.dumps(record) + "\n")


def read_ground_truth(path) -> list[GroundTruth]:
    """Read annotation records, grouped per video in first-seen order.

    The record schema carries no duration, so each video's duration is
    taken as the largest segment end time.
    """
    grouped: dict[str, list[Segment]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = _parse_line(line, lineno, _GROUND_TRUTH_FIELDS)
            try:
                seg = Segment(
                    t_start=float(obj["t_start"]), t_end=float(obj["t_end"]), label=obj["label"]
                )
            except ValidationError as exc:
                raise RecordError(lineno, str(exc)) from exc
            grouped.setdefault(obj["video_id"], []).append(seg)
    return [
        GroundTruth(
            video_id=vid,
            duration=max(s.t_end for s in segs),
            segments=tuple(segs),
        )
        for vid, segs in grouped.items()
    ]


def write_ground_truth(gts: GroundTruth | Iterable[GroundTruth], path) -> None:
    """Write annotations as newline-delimited records (no score field)."""
    if isinstance(gts, GroundTruth):
        gts = [gts]
    with open(path, "w", encoding="utf-8") as fh:
        for gt in gts:
            for seg in gt.segments:
                record = {
                    "video_id": gt.video_id,
                    "t_start": seg.t_start,
                    "t_end": seg.t_end,
                    "label": seg.label,
                }
                fh.write(json.dumps(record) + "\n")


# ---------------------------------------------------------------------------
# Evaluation reports
# ---------------------------------------------------------------------------


def write_report(report, path) -> None:
    """Serialize an EvalReport in the newline-delimited record style.

    Record order is deterministic (classes sorted, thresholds ascending),
    so identical reports produce byte-identical files.
    """
    classes = sorted(report.per_class_ap)
    thresholds = sorted(report.thresholds)
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "record": "report",
            "thresholds": thresholds,
            "classes": classes,
            "spurious_labels": sorted(report.spurious_labels),
            "average_map": report.average_map,
        }
        fh.write(json.dumps(header) + "\n")
        for label in classes:
            for t in thresholds:
                rec = {"record": "class_ap", "label": label, "iou": t, "ap": report.per_class_ap[label][t]}
                fh.write(json.dumps(rec) + "\n")
        for t in thresholds:
            fh.write(json.dumps({"record": "map", "iou": t, "map": report.map_at[t]}) + "\n")


def read_report(path):
    """Read a report written by write_report back into an EvalReport."""
    from .evaluation import EvalReport

    header = None
    per_class_ap: dict[str, dict[float, float]] = {}
    map_at: dict[float, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(lineno, f"invalid JSON ({exc.msg})") from exc
            kind = obj.get("record")
            if kind == "report":
                header = obj
            elif kind == "class_ap":
                per_class_ap.setdefault(obj["label"], {})[obj["iou"]] = obj["ap"]
            elif kind == "map":
                map_at[obj["iou"]] = obj["map"]
            else:
                raise RecordError(lineno, f"unknown record kind {kind!r}")
    if header is None:
        raise FormatError(f"{path}: missing report header record")
    missing = [c for c in header["classes"] if c not in per_class_ap]
    if missing:
        raise FormatError(f"{path}: header lists classes {missing} with no class_ap records")
    return EvalReport(
        thresholds=tuple(header["thresholds"]),
        per_class_ap=per_class_ap,
        map_at=map_at,
        average_map=header["average_map"],
        spurious_labels=tuple(header["spurious_labels"]),
    )


# ---------------------------------------------------------------------------
# MMCK checkpoint container
# ---------------------------------------------------------------------------


def write_checkpoint(meta: Mapping, arrays: Mapping[str, np.ndarray], path) -> None:
    """Write named float64 arrays plus a JSON metadata block."""
    meta_bytes = json.dumps(dict(meta), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC_CHECKPOINT)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint written by write_checkpoint."""
    with open(path, "rb") as fh:
        raw = fh.read()
    view = memoryview(raw)
    pos = 0

    def take(n: int, what: str):
        nonlocal pos
        if pos + n > len(view):
            raise TruncatedError(f"{path}: truncated while reading {what}")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4, "magic")) != MAGIC_CHECKPOINT:
        raise FormatError(f"{path}: bad magic, expected {MAGIC_CHECKPOINT!r}")
    version, meta_len = struct.unpack("<II", take(8, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    meta = json.loads(bytes(take(meta_len, "metadata")).decode("utf-8"))
    (n_sections,) = struct.unpack("<I", take(4, "section count"))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_sections):
        (name_len,) = struct.unpack("<H", take(2, "section name length"))
        name = bytes(take(name_len, "section name")).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, "section ndim"))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim, "section shape"))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        payload = take(count * 8, f"section {name!r} payload")
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if pos != len(view):
        raise FormatError(f"{path}: {len(view) - pos} trailing bytes after last section")
    return meta, arrays
