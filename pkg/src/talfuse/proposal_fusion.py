"""Decision-level fusion: pool per-modality proposal sets, reduce with NMS.

Suppression is class-wise (standard temporal-localization practice): a
kept proposal only discards lower-ranked proposals of the same class.
Only plain hard NMS is provided.  Ties on score are broken by earlier
start, then longer duration, then input order, so outputs are
reproducible across runs and platforms.
"""

from collections.abc import Sequence

from .core import ProposalSet, ValidationError, temporal_iou

__all__ = ["nms", "pool_and_nms"]


def nms(pset: ProposalSet, iou_threshold: float, max_out: int | None = None) -> ProposalSet:
    """Greedy class-wise non-maximum suppression.

    Repeatedly emit the highest-ranked remaining proposal (any class) and
    discard remaining proposals of the same class whose temporal IoU with
    it exceeds iou_threshold; stop once max_out proposals are emitted.
    Proposals are passed through unaltered.
    """
    if not (0.0 < iou_threshold < 1.0):
        raise ValidationError(f"iou_threshold must lie in (0, 1), got {iou_threshold!r}")
    if max_out is not None and max_out < 1:
        raise ValidationError(f"max_out must be >= 1, got {max_out}")

    props = pset.proposals
    order = sorted(
        range(len(props)),
        key=lambda i: (-props[i].score, props[i].t_start, props[i].t_start - props[i].t_end, i),
    )
    alive = [True] * len(props)
    kept = []
    for pos, i in enumerate(order):
        if not alive[i]:
            continue
        alive[i] = False
        kept.append(props[i])
        if max_out is not None and len(kept) >= max_out:
            break
        for j in order[pos + 1 :]:
            if (
                alive[j]
                and props[j].label == props[i].label
                and temporal_iou(props[i].interval, props[j].interval) > iou_threshold
            ):
                alive[j] = False
    return ProposalSet(video_id=pset.video_id, proposals=tuple(kept))


def pool_and_nms(
    sets: Sequence[ProposalSet], iou_threshold: float, max_out: int | None = None
) -> ProposalSet:
    """Concatenate proposal sets for one video across modalities, then NMS."""
    if not sets:
        raise ValidationError("need at least one proposal set to pool")
    video_ids = {s.video_id for s in sets}
    if len(video_ids) != 1:
        raise ValidationError(f"pooled sets span multiple videos: {sorted(video_ids)}")
    pooled = ProposalSet(
        video_id=sets[0].video_id,
        proposals=tuple(p for s in sets for p in s),
    )
    return nms(pooled, iou_threshold, max_out=max_out)
