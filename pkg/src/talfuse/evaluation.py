"""Detection evaluation: IoU-threshold matching, per-class AP, mAP sweeps.

A prediction is a true positive iff its temporal IoU with some
not-yet-matched ground-truth segment of the same class reaches the IoU
threshold; each ground-truth segment absorbs at most one prediction, in
descending score order.  AP uses all-points interpolation (area under
the monotone non-increasing precision envelope, sampled at every recall
change), the convention of the large-scale localization benchmarks.

Classes are the labels present in the ground truth.  Predicted labels
absent from the ground truth contribute nothing to mAP; they are
reported separately as spurious labels.  Only score ordering matters:
any strictly monotone transformation of all scores leaves the report
unchanged.

Preset threshold sweeps: "thumos" = 0.3..0.7 step 0.1, "anet" =
{0.5, 0.75, 0.95}.  The reported average mAP is the mean of mAP over
the threshold list.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .core import GroundTruth, Proposal, ProposalSet, ValidationError, temporal_iou

__all__ = [
    "PRESETS",
    "EvalReport",
    "match_predictions",
    "average_precision",
    "evaluate",
    "per_class_delta",
]

PRESETS: dict[str, tuple[float, ...]] = {
    "thumos": (0.3, 0.4, 0.5, 0.6, 0.7),
    "anet": (0.5, 0.75, 0.95),
}


@dataclass(frozen=True)
class EvalReport:
    """Per-class AP at each IoU threshold plus the mAP table."""

    thresholds: tuple[float, ...]
    per_class_ap: dict[str, dict[float, float]]
    map_at: dict[float, float]
    average_map: float
    spurious_labels: tuple[str, ...] = ()

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(self.per_class_ap))


def match_predictions(
    preds: ProposalSet, gt: GroundTruth, iou_threshold: float
) -> list[tuple[Proposal, bool]]:
    """Flag each prediction of one video as TP or FP at the given threshold.

    Predictions are taken in descending score order (ties: earlier start
    first); each is matched to the unmatched same-class ground-truth
    segment of highest IoU, provided that IoU reaches the threshold.
    """
    if preds.video_id != gt.video_id:
        raise ValidationError(
            f"video mismatch: predictions {preds.video_id!r} vs ground truth {gt.video_id!r}"
        )
    if not (0.0 < iou_threshold <= 1.0):
        raise ValidationError(f"iou_threshold must lie in (0, 1], got {iou_threshold!r}")

    ordered = sorted(preds.proposals, key=lambda p: (-p.score, p.t_start))
    taken = [False] * len(gt.segments)
    out = []
    for prop in ordered:
        best_iou = 0.0
        best_j = -1
        for j, seg in enumerate(gt.segments):
            if taken[j] or seg.label != prop.label:
                continue
            iou = temporal_iou(prop.interval, seg.interval)
            if iou >= iou_threshold and iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            out.append((prop, True))
        else:
            out.append((prop, False))
    return out


def average_precision(flags: Sequence[bool], num_gt: int) -> float | None:
    """Area under the interpolated precision-recall curve.

    flags is the TP/FP sequence in descending score order.  Returns None
    when num_gt == 0 (AP undefined, class excluded from mAP); returns 0.0
    for no detections.
    """
    if num_gt < 0:
        raise ValidationError(f"num_gt must be >= 0, got {num_gt}")
    if num_gt == 0:
        return None
    if len(flags) == 0:
        return 0.0
    flags = np.asarray(flags, dtype=np.float64)
    tp = np.cumsum(flags)
    fp = np.cumsum(1.0 - flags)
    precision = tp / (tp + fp)
    recall = tp / num_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * envelope))


def _resolve_thresholds(thresholds) -> tuple[float, ...]:
    if isinstance(thresholds, str):
        if thresholds not in PRESETS:
            raise ValidationError(
                f"unknown preset {thresholds!r}, available: {sorted(PRESETS)}"
            )
        return PRESETS[thresholds]
    out = tuple(sorted(set(float(t) for t in thresholds)))
    if not out:
        raise ValidationError("threshold list must not be empty")
    for t in out:
        if not (0.0 < t <= 1.0):
            raise ValidationError(f"IoU threshold {t} outside (0, 1]")
    return out


def evaluate(
    preds: Mapping[str, ProposalSet],
    gts: Mapping[str, GroundTruth],
    thresholds="thumos",
) -> EvalReport:
    """Full evaluation across videos: per-class AP per threshold, mAP table.

    Matched flags are pooled per class across videos at each threshold.
    thresholds may be an explicit list or a preset name.
    """
    thresholds = _resolve_thresholds(thresholds)
    unknown = sorted(v for v in preds if v not in gts)
    if unknown:
        raise ValidationError(f"predictions for unknown video id(s): {unknown}")

    num_gt: dict[str, int] = {}
    for gt in gts.values():
        for seg in gt.segments:
            num_gt[seg.label] = num_gt.get(seg.label, 0) + 1
    classes = sorted(num_gt)
    spurious = sorted(
        {p.label for ps in preds.values() for p in ps if p.label not in num_gt}
    )

    video_ids = sorted(gts)
    per_class_ap: dict[str, dict[float, float]] = {c: {} for c in classes}
    map_at: dict[float, float] = {}
    for t in thresholds:
        entries: dict[str, list[tuple[float, float, str, bool]]] = {c: [] for c in classes}
        for vid in video_ids:
            if vid not in preds:
                continue
            for prop, is_tp in match_predictions(preds[vid], gts[vid], t):
                if prop.label in entries:
                    entries[prop.label].append((-prop.score, prop.t_start, vid, is_tp))
        aps = []
        for c in classes:
            flags = [e[3] for e in sorted(entries[c])]
            ap = average_precision(flags, num_gt[c])
            per_class_ap[c][t] = ap
            aps.append(ap)
        map_at[t] = float(np.mean(aps)) if aps else 0.0
    average_map = float(np.mean([map_at[t] for t in thresholds]))
    return EvalReport(
        thresholds=thresholds,
        per_class_ap=per_class_ap,
        map_at=map_at,
        average_map=average_map,
        spurious_labels=tuple(spurious),
    )


def per_class_delta(
    with_audio: EvalReport, video_only: EvalReport, threshold: float
) -> list[tuple[str, float]]:
    """Per-class AP change (with_audio minus video_only) at one threshold,
    sorted by descending improvement; a plot-ready table."""
    if with_audio.classes != video_only.classes:
        raise ValidationError(
            f"class sets differ: {with_audio.classes} vs {video_only.classes}"
        )
    for report, name in ((with_audio, "first"), (video_only, "second")):
        if threshold not in report.map_at:
            raise ValidationError(
                f"threshold {threshold} absent from {name} report "
                f"(has {sorted(report.map_at)})"
            )
    deltas = [
        (label, with_audio.per_class_ap[label][threshold] - video_only.per_class_ap[label][threshold])
        for label in with_audio.classes
    ]
    return sorted(deltas, key=lambda item: (-item[1], item[0]))
