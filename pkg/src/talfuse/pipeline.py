"""Glue between the modules: scheme dispatch, checkpoints, per-video jobs.

A "scheme" names what the snippet scorer consumes:
    video / audio  -- single-modality features, no alignment;
    concat         -- aligned pair concatenated along features;
    rmattn         -- aligned pair fused by the residual attention block,
                      trained jointly with the scorer.

Per-video work (inference) can run in a thread pool capped by the
TALFUSE_THREADS environment variable; results are always reduced in
video-id order, so the pool size never changes any output.
"""

import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import fusion
from .alignment import (
    AlignedPair,
    avg_trim,
    dup_trim,
    pair_by_window_centering,
    DEFAULT_PAIRING_WINDOW,
)
from .core import FeatureSequence, GroundTruth, ProposalSet, SnippetTiming, ValidationError
from .io_formats import read_checkpoint, read_features, read_ground_truth, write_checkpoint
from .localizer import (
    ProposalConfig,
    ScorerParams,
    TrainConfig,
    TrainResult,
    generate_proposals,
    score_sequence,
    train_scorer,
)
from .synth import Manifest

__all__ = [
    "SCHEMES",
    "ALIGN_METHODS",
    "PipelineSettings",
    "Checkpoint",
    "Episode",
    "align_pair",
    "snippet_labels",
    "load_split",
    "train_pipeline",
    "infer_episode",
    "infer_all",
    "save_checkpoint",
    "load_checkpoint",
    "worker_count",
    "pooled_map",
]

SCHEMES = ("video", "audio", "concat", "rmattn")
ALIGN_METHODS = ("paired", "duptrim", "avgtrim")

CHECKPOINT_KIND = "talfuse-pipeline"


@dataclass(frozen=True)
class PipelineSettings:
    """Flat, file-friendly bundle of every training-time knob."""

    lr: float = 0.2
    epochs: int = 30
    batch: int = 256
    seed: int = 0
    l2: float = 1e-4
    align: str = "paired"
    pair_window: float = DEFAULT_PAIRING_WINDOW
    d_h: Optional[int] = None
    proposal_thresholds: tuple[float, ...] = (0.2, 0.3, 0.5, 0.7)
    min_len: int = 2

    def __post_init__(self):
        object.__setattr__(self, "proposal_thresholds", tuple(self.proposal_thresholds))
        if self.align not in ALIGN_METHODS:
            raise ValidationError(f"align must be one of {ALIGN_METHODS}, got {self.align!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["proposal_thresholds"] = list(out["proposal_thresholds"])
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSettings":
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValidationError(f"unknown training config key(s): {unknown}")
        return cls(**d)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, epochs=self.epochs, batch=self.batch, seed=self.seed, l2=self.l2)

    @property
    def proposal_config(self) -> ProposalConfig:
        return ProposalConfig(thresholds=self.proposal_thresholds, min_len=self.min_len)


@dataclass(frozen=True)
class Episode:
    """One video's worth of in-memory inputs."""

    video_id: str
    video: FeatureSequence
    audio: FeatureSequence
    gt: Optional[GroundTruth] = None


@dataclass(frozen=True)
class Checkpoint:
    """Everything inference needs: scorer, optional fusion block, config."""

    scheme: str
    align: str
    pair_window: float
    labels: tuple[str, ...]
    scorer: ScorerParams
    proposal: ProposalConfig
    rmattn: Optional[fusion.RMAttnParams] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "rmattn" and self.rmattn is None:
            raise ValidationError("rmattn scheme requires attention parameters")


def worker_count() -> int:
    """Worker pool size; capped by the TALFUSE_THREADS environment variable."""
    raw = os.environ.get("TALFUSE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"TALFUSE_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def pooled_map(fn, items: Sequence):
    """Map fn over items, in a thread pool when configured; order preserved."""
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def align_pair(
    video: FeatureSequence,
    audio: FeatureSequence,
    method: str,
    pair_window: float = DEFAULT_PAIRING_WINDOW,
) -> AlignedPair:
    if method == "paired":
        return pair_by_window_centering(audio, video, window=pair_window)
    if method == "duptrim":
        return dup_trim(audio, video)
    if method == "avgtrim":
        return avg_trim(audio, video)
    raise ValidationError(f"unknown alignment method {method!r}, expected one of {ALIGN_METHODS}")


def snippet_labels(
    gt: GroundTruth, timing: SnippetTiming, length: int, label_index: dict[str, int]
) -> np.ndarray:
    """Class index per snippet: c where the snippet center falls inside a
    segment of class c, else 0 (background)."""
    out = np.zeros(length, dtype=np.int64)
    centers = np.array([timing.center(i) for i in range(length)])
    for seg in gt.segments:
        if seg.label not in label_index:
            raise ValidationError(f"segment label {seg.label!r} missing from label index")
        inside = (centers >= seg.t_start) & (centers <= seg.t_end)
        out[inside] = label_index[seg.label]
    return out


def _model_input(episode: Episode, scheme, align, pair_window, rmattn=None):
    """The scorer's input for one episode: a FeatureSequence, or an
    AlignedPair when the caller trains the fusion block jointly."""
    if scheme == "video":
        return episode.video
    if scheme == "audio":
        return episode.audio
    pair = align_pair(episode.video, episode.audio, align, pair_window)
    if scheme == "concat":
        return fusion.concat_fuse(pair)
    if scheme == "rmattn":
        if rmattn is None:
            return pair
        fused, _ = fusion.rmattn_forward(rmattn, pair)
        return fused
    raise ValidationError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")


def load_split(manifest: Manifest, split: str) -> list[Episode]:
    """Load a manifest split's features and annotations into memory."""
    gt_path = manifest.root / manifest.annotations[split]
    gts = {g.video_id: g for g in read_ground_truth(gt_path)}
    episodes = []
    for entry in manifest.split(split):
        episodes.append(
            Episode(
                video_id=entry.video_id,
                video=read_features(manifest.root / entry.video_path),
                audio=read_features(manifest.root / entry.audio_path),
                gt=gts.get(entry.video_id),
            )
        )
    return episodes


def train_pipeline(
    episodes: Sequence[Episode],
    scheme: str,
    settings: PipelineSettings,
    num_classes: int,
) -> tuple[Checkpoint, TrainResult]:
    """Train the scorer (and, for rmattn, the fusion block jointly) on
    episodes that carry ground truth; returns the checkpoint and the
    training trace."""
    if scheme not in SCHEMES:
        raise ValidationError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    labels = tuple(str(c) for c in range(1, num_classes + 1))
    label_index = {lab: i + 1 for i, lab in enumerate(labels)}

    rmattn0 = None
    dataset = []
    for ep in episodes:
        if ep.gt is None:
            raise ValidationError(f"episode {ep.video_id} has no ground truth")
        model_in = _model_input(ep, scheme, settings.align, settings.pair_window)
        timing = model_in.video.timing if isinstance(model_in, AlignedPair) else model_in.timing
        length = model_in.length
        dataset.append((model_in, snippet_labels(ep.gt, timing, length, label_index)))
    if scheme == "rmattn":
        first = dataset[0][0]
        rmattn0 = fusion.rmattn_init(
            d_v=first.video.dim, d_a=first.audio.dim, d_h=settings.d_h, seed=settings.seed
        )

    result = train_scorer(
        dataset, settings.train_config, num_classes=num_classes, rmattn=rmattn0
    )
    ckpt = Checkpoint(
        scheme=scheme,
        align=settings.align,
        pair_window=settings.pair_window,
        labels=labels,
        scorer=result.scorer,
        proposal=settings.proposal_config,
        rmattn=result.rmattn,
    )
    return ckpt, result


def infer_episode(ckpt: Checkpoint, episode: Episode) -> ProposalSet:
    """Score one episode under the checkpoint's scheme and extract proposals."""
    model_in = _model_input(
        episode, ckpt.scheme, ckpt.align, ckpt.pair_window, rmattn=ckpt.rmattn
    )
    scores = score_sequence(ckpt.scorer, model_in)
    return generate_proposals(
        scores, model_in.timing, episode.video_id, ckpt.proposal, labels=ckpt.labels
    )


def infer_all(ckpt: Checkpoint, episodes: Sequence[Episode]) -> dict[str, ProposalSet]:
    """Proposals for every episode, reduced in video-id order."""
    ordered = sorted(episodes, key=lambda e: e.video_id)
    results = pooled_map(lambda ep: infer_episode(ckpt, ep), ordered)
    return {ep.video_id: ps for ep, ps in zip(ordered, results)}


# ---------------------------------------------------------------------------
# Checkpoint serialization (MMCK container)
# ---------------------------------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    meta = {
        "kind": CHECKPOINT_KIND,
        "scheme": ckpt.scheme,
        "align": ckpt.align,
        "pair_window": ckpt.pair_window,
        "labels": list(ckpt.labels),
        "proposal_thresholds": list(ckpt.proposal.thresholds),
        "min_len": ckpt.proposal.min_len,
    }
    arrays = {"scorer_weights": ckpt.scorer.weights, "scorer_bias": ckpt.scorer.bias}
    if ckpt.rmattn is not None:
        meta["rmattn_topology"] = fusion.RMATTN_TOPOLOGY
        for name, arr in ckpt.rmattn.to_arrays().items():
            arrays[f"rmattn/{name}"] = arr
    write_checkpoint(meta, arrays, path)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = read_checkpoint(path)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise ValidationError(f"{path}: not a pipeline checkpoint (kind={meta.get('kind')!r})")
    rmattn = None
    rm_arrays = {
        name.split("/", 1)[1]: arr for name, arr in arrays.items() if name.startswith("rmattn/")
    }
    if rm_arrays:
        rmattn = fusion.RMAttnParams.from_arrays(rm_arrays)
    return Checkpoint(
        scheme=meta["scheme"],
        align=meta["align"],
        pair_window=meta["pair_window"],
        labels=tuple(meta["labels"]),
        scorer=ScorerParams(weights=arrays["scorer_weights"], bias=arrays["scorer_bias"]),
        proposal=ProposalConfig(
            thresholds=tuple(meta["proposal_thresholds"]), min_len=meta["min_len"]
        ),
        rmattn=rmattn,
    )
