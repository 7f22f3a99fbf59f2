"""Shared domain types and temporal-interval arithmetic.

All timestamps are continuous seconds.  Intervals are closed; a shared
endpoint has measure zero and contributes nothing to overlap.  Every type
here is immutable after construction and every function is pure, so all
of it is safe to use concurrently without synchronization.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "ValidationError",
    "Modality",
    "SnippetTiming",
    "FeatureSequence",
    "Proposal",
    "ProposalSet",
    "Segment",
    "GroundTruth",
    "temporal_iou",
    "snippet_centers",
]


class ValidationError(ValueError):
    """An input violated a documented invariant."""


class Modality(Enum):
    VIDEO = "video"
    AUDIO = "audio"
    FUSED = "fused"


@dataclass(frozen=True)
class SnippetTiming:
    """Uniform snippet grid: snippet i covers the window
    [start_offset + i*hop, start_offset + i*hop + window]."""

    start_offset: float
    hop: float
    window: float

    def __post_init__(self):
        for name in ("start_offset", "hop", "window"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValidationError(f"timing {name} must be finite, got {v!r}")
        if self.hop <= 0:
            raise ValidationError(f"hop must be > 0, got {self.hop}")
        if self.window <= 0:
            raise ValidationError(f"window must be > 0, got {self.window}")

    def center(self, i: int) -> float:
        return self.start_offset + i * self.hop + self.window / 2.0

    def snippet_interval(self, i: int) -> tuple[float, float]:
        """Window edges of snippet i as (start, end) seconds."""
        start = self.start_offset + i * self.hop
        return (start, start + self.window)


@dataclass(frozen=True)
class FeatureSequence:
    """One modality's snippet-feature matrix with timing metadata.

    `data` is an immutable float64 matrix of shape (length, dim); every
    entry must be finite.  Snippet center times are strictly increasing
    because hop > 0.
    """

    modality: Modality
    data: np.ndarray
    timing: SnippetTiming

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"feature data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"feature data needs L >= 1 and d >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("feature data contains non-finite entries")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def centers(self) -> np.ndarray:
        return np.asarray(snippet_centers(self.timing, self.length))


@dataclass(frozen=True)
class Proposal:
    """A candidate action instance: temporal segment, class label, confidence.

    Scores outside [0, 1] are rejected, never clamped; silent clamping
    would hide producer bugs.
    """

    t_start: float
    t_end: float
    label: str
    score: float

    def __post_init__(self):
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)):
            raise ValidationError("proposal boundaries must be finite")
        if not (0.0 <= self.t_start < self.t_end):
            raise ValidationError(
                f"proposal needs 0 <= t_start < t_end, got [{self.t_start}, {self.t_end}]"
            )
        if not (np.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValidationError(f"score must lie in [0, 1], got {self.score!r}")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.t_start, self.t_end)


@dataclass(frozen=True)
class ProposalSet:
    """All proposals for one video.  May be empty."""

    video_id: str
    proposals: tuple[Proposal, ...]

    def __post_init__(self):
        object.__setattr__(self, "proposals", tuple(self.proposals))

    def __len__(self) -> int:
        return len(self.proposals)

    def __iter__(self):
        return iter(self.proposals)


@dataclass(frozen=True)
class Segment:
    """One annotated action instance in the ground truth."""

    t_start: float
    t_end: float
    label: str

    def __post_init__(self):
        if not (0.0 <= self.t_start < self.t_end):
            raise ValidationError(
                f"segment needs 0 <= t_start < t_end, got [{self.t_start}, {self.t_end}]"
            )

    @property
    def interval(self) -> tuple[float, float]:
        return (self.t_start, self.t_end)


@dataclass(frozen=True)
class GroundTruth:
    """Reference annotations for one video."""

    video_id: str
    duration: float
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ValidationError(f"duration must be positive, got {self.duration!r}")
        for seg in self.segments:
            if seg.t_end > self.duration:
                raise ValidationError(
                    f"segment [{seg.t_start}, {seg.t_end}] exceeds duration {self.duration}"
                )


def temporal_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Intersection over union of two time intervals, in [0, 1].

    The union is the measure of the set union (|a| + |b| - |a cap b|),
    not the convex hull.  Disjoint intervals give 0; a shared endpoint
    counts as disjoint (measure zero).
    """
    a_start, a_end = a
    b_start, b_end = b
    if a_start >= a_end:
        raise ValidationError(f"degenerate interval {a!r}")
    if b_start >= b_end:
        raise ValidationError(f"degenerate interval {b!r}")
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0.0:
        return 0.0
    union = (a_end - a_start) + (b_end - b_start) - inter
    return inter / union


def snippet_centers(timing: SnippetTiming, length: int) -> list[float]:
    """Center times of snippets 0..length-1, strictly increasing."""
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    return [timing.center(i) for i in range(length)]
