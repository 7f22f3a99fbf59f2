"""Length-equalization of audio and video feature sequences.

Feature-dimension fusion needs both modalities on a common grid.  Three
routes are provided:

* pair_by_window_centering -- resample audio onto the video snippet grid
  by averaging every audio feature whose window overlaps a query window
  centered on each video snippet center (zero row where no audio covers
  the query, mirroring zero-padding of missing signal).
* dup_trim -- replicate each element of the shorter sequence k times
  (k = floor(longer/shorter), at least 1), then trim both to a common
  length min(longer, k * shorter).
* avg_trim -- pool the longer sequence by averaging consecutive groups of
  k' = ceil(longer/shorter) elements (final partial group averaged over
  its actual size), then trim both to min(pooled, shorter).

Trimming always keeps the prefix.  All functions are pure.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .core import FeatureSequence, Modality, ValidationError

__all__ = [
    "AlignmentMethod",
    "AlignmentTrace",
    "AlignedPair",
    "pair_by_window_centering",
    "dup_trim",
    "avg_trim",
]

DEFAULT_PAIRING_WINDOW = 1.2


class AlignmentMethod(Enum):
    PAIRED = "paired"
    DUP_TRIM = "dup_trim"
    AVG_TRIM = "avg_trim"


@dataclass(frozen=True)
class AlignmentTrace:
    """Bookkeeping of one alignment: factors and the common trimmed length.

    k is the replication factor (dup_trim) or grouping factor (avg_trim,
    where it equals k_prime); k_prime and pooled_length are set only by
    avg_trim.
    """

    method: AlignmentMethod
    k: int
    common_length: int
    k_prime: Optional[int] = None
    pooled_length: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.common_length < 1:
            raise ValidationError(f"common length must be >= 1, got {self.common_length}")


@dataclass(frozen=True)
class AlignedPair:
    """Equal-length (video, audio) sequences ready for feature fusion."""

    video: FeatureSequence
    audio: FeatureSequence
    trace: AlignmentTrace

    def __post_init__(self):
        if self.video.modality is not Modality.VIDEO or self.audio.modality is not Modality.AUDIO:
            raise ValidationError("aligned pair must hold (video, audio) modalities")
        if self.video.length != self.audio.length:
            raise ValidationError(
                f"aligned lengths differ: video {self.video.length}, audio {self.audio.length}"
            )
        if self.video.length != self.trace.common_length:
            raise ValidationError("trace common_length does not match sequence lengths")

    @property
    def length(self) -> int:
        return self.video.length


def _check_modalities(audio: FeatureSequence, video: FeatureSequence) -> None:
    if audio.modality is not Modality.AUDIO:
        raise ValidationError(f"first argument must be audio, got {audio.modality}")
    if video.modality is not Modality.VIDEO:
        raise ValidationError(f"second argument must be video, got {video.modality}")


def pair_by_window_centering(
    audio: FeatureSequence,
    video: FeatureSequence,
    window: float = DEFAULT_PAIRING_WINDOW,
) -> AlignedPair:
    """Resample audio onto the video grid by window-centered averaging.

    For each video snippet center c, the output audio row is the mean of
    all audio rows whose own window overlaps [c - window/2, c + window/2]
    with positive measure; rows with no overlapping audio become zero
    vectors (no information present there).  Output length equals the
    video length.
    """
    _check_modalities(audio, video)
    if not (np.isfinite(window) and window > 0):
        raise ValidationError(f"pairing window must be > 0, got {window!r}")

    v_centers = video.centers()
    a_centers = audio.centers()
    half = window / 2.0
    a_half = audio.timing.window / 2.0
    # Audio row j overlaps the query window iff its center lies strictly
    # inside (c - half - a_half, c + half + a_half); touching endpoints
    # have measure zero and do not count.
    lo = np.searchsorted(a_centers, v_centers - half - a_half, side="right")
    hi = np.searchsorted(a_centers, v_centers + half + a_half, side="left")

    out = np.zeros((video.length, audio.dim), dtype=np.float64)
    for i in range(video.length):
        if hi[i] > lo[i]:
            out[i] = audio.data[lo[i] : hi[i]].mean(axis=0)

    resampled = FeatureSequence(modality=Modality.AUDIO, data=out, timing=video.timing)
    trace = AlignmentTrace(method=AlignmentMethod.PAIRED, k=1, common_length=video.length)
    return AlignedPair(video=video, audio=resampled, trace=trace)


def dup_trim(audio: FeatureSequence, video: FeatureSequence) -> AlignedPair:
    """Duplicate the shorter sequence's elements, then trim to a common length.

    Each element of the shorter sequence is repeated k times consecutively
    with k = max(1, floor(longer / shorter)); both sequences are then
    truncated to min(longer, k * shorter).  The result carries the longer
    sequence's timing.  Equal-length inputs pass through unchanged.
    """
    _check_modalities(audio, video)
    if audio.length == video.length:
        trace = AlignmentTrace(method=AlignmentMethod.DUP_TRIM, k=1, common_length=video.length)
        return AlignedPair(video=video, audio=audio, trace=trace)

    shorter, longer = (audio, video) if audio.length < video.length else (video, audio)
    k = max(1, longer.length // shorter.length)
    common = min(longer.length, k * shorter.length)

    duplicated = np.repeat(shorter.data, k, axis=0)[:common]
    trimmed = longer.data[:common]
    new_shorter = FeatureSequence(modality=shorter.modality, data=duplicated, timing=longer.timing)
    new_longer = FeatureSequence(modality=longer.modality, data=trimmed, timing=longer.timing)

    video_out, audio_out = (
        (new_shorter, new_longer) if shorter.modality is Modality.VIDEO else (new_longer, new_shorter)
    )
    trace = AlignmentTrace(method=AlignmentMethod.DUP_TRIM, k=k, common_length=common)
    return AlignedPair(video=video_out, audio=audio_out, trace=trace)


def avg_trim(audio: FeatureSequence, video: FeatureSequence) -> AlignedPair:
    """Pool the longer sequence by group averaging, then trim to a common length.

    The longer sequence is partitioned into consecutive groups of
    k' = ceil(longer / shorter); each group is replaced by its mean (the
    final partial group is averaged over its actual size), giving a pooled
    length of ceil(longer / k').  Both sequences are then truncated to
    min(pooled, shorter).  The result carries the shorter (ungrouped)
    sequence's timing, since pooling maps the longer onto its rate.
    Equal-length inputs pass through unchanged.
    """
    _check_modalities(audio, video)
    if audio.length == video.length:
        trace = AlignmentTrace(
            method=AlignmentMethod.AVG_TRIM,
            k=1,
            common_length=video.length,
            k_prime=1,
            pooled_length=video.length,
        )
        return AlignedPair(video=video, audio=audio, trace=trace)

    shorter, longer = (audio, video) if audio.length < video.length else (video, audio)
    k_prime = -(-longer.length // shorter.length)  # ceil(longer / shorter)
    starts = np.arange(0, longer.length, k_prime)
    sizes = np.minimum(starts + k_prime, longer.length) - starts
    pooled = np.add.reduceat(longer.data, starts, axis=0) / sizes[:, None]
    pooled_length = len(starts)  # == ceil(longer / k')
    common = min(pooled_length, shorter.length)

    new_longer = FeatureSequence(
        modality=longer.modality, data=pooled[:common], timing=shorter.timing
    )
    new_shorter = FeatureSequence(
        modality=shorter.modality, data=shorter.data[:common], timing=shorter.timing
    )
    video_out, audio_out = (
        (new_shorter, new_longer) if shorter.modality is Modality.VIDEO else (new_longer, new_shorter)
    )
    trace = AlignmentTrace(
        method=AlignmentMethod.AVG_TRIM,
        k=k_prime,
        common_length=common,
        k_prime=k_prime,
        pooled_length=pooled_length,
    )
    return AlignedPair(video=video_out, audio=audio_out, trace=trace)
