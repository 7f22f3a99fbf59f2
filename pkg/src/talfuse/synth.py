"""Synthetic multimodal streams with controllable audio informativeness.

Episodes are Gaussian background noise with class-specific signature
vectors added over non-overlapping action segments.  Video rows inside a
segment always carry the class's video signature.  Audio is informative
per segment with probability rho: the class's audio signature is added
over the segment's span, with extra transient boosts (magnitude beta) on
the first and last covered audio snippet marking onset and offset.  With
probability 1 - rho the segment instead triggers an unrelated ambient
burst: a counterfeit of a randomly chosen class's audio signature (with
matching transients) at a random position, so uninformative audio
actively misleads rather than being silent.

Everything is deterministic for a fixed seed; per-episode generators are
split from the seed stream by episode index, so episodes can be produced
independently and concurrently.
"""

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .core import FeatureSequence, GroundTruth, Modality, Segment, SnippetTiming, ValidationError
from .io_formats import FormatError, write_features, write_ground_truth

__all__ = [
    "GenerationError",
    "SynthConfig",
    "ManifestEpisode",
    "Manifest",
    "generate_episode",
    "generate_dataset",
    "read_manifest",
]


class GenerationError(RuntimeError):
    """Episode constraints cannot be satisfied (e.g. actions do not fit)."""


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 5
    d_v: int = 16
    d_a: int = 8
    hop: float = 1.0
    window: float = 1.0
    audio_hop: float | None = None  # None: audio shares the video grid
    audio_window: float | None = None
    episode_snippets: tuple[int, int] = (40, 60)
    actions_per_episode: tuple[int, int] = (1, 3)
    action_snippets: tuple[int, int] = (4, 10)
    audio_informativeness: float = 0.9
    transient_boost: float = 2.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "episode_snippets", tuple(self.episode_snippets))
        object.__setattr__(self, "actions_per_episode", tuple(self.actions_per_episode))
        object.__setattr__(self, "action_snippets", tuple(self.action_snippets))
        if self.num_classes < 1 or self.d_v < 1 or self.d_a < 1:
            raise ValidationError("num_classes, d_v, d_a must all be >= 1")
        if self.hop <= 0 or self.window <= 0:
            raise ValidationError("hop and window must be > 0")
        if (self.audio_hop is None) != (self.audio_window is None):
            raise ValidationError("audio_hop and audio_window must be set together")
        for name in ("episode_snippets", "actions_per_episode", "action_snippets"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < (0 if name == "actions_per_episode" else 1):
                raise ValidationError(f"empty or invalid range {name}={lo, hi}")
        if not 0.0 <= self.audio_informativeness <= 1.0:
            raise ValidationError("audio_informativeness must lie in [0, 1]")
        if self.transient_boost < 0:
            raise ValidationError("transient_boost must be >= 0")
        if self.noise_sigma <= 0:
            raise ValidationError("noise_sigma must be > 0")

    @property
    def video_timing(self) -> SnippetTiming:
        return SnippetTiming(start_offset=0.0, hop=self.hop, window=self.window)

    @property
    def audio_timing(self) -> SnippetTiming:
        return SnippetTiming(
            start_offset=0.0,
            hop=self.audio_hop if self.audio_hop is not None else self.hop,
            window=self.audio_window if self.audio_window is not None else self.window,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("episode_snippets", "actions_per_episode", "action_snippets"):
            out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown synth config key(s): {unknown}")
        return cls(**d)


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def class_signatures(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class unit signature vectors (video, audio, audio transient),
    fixed by the config seed and shared by every episode."""
    video = _unit_rows(np.random.default_rng((cfg.seed, 101)), cfg.num_classes, cfg.d_v)
    audio = _unit_rows(np.random.default_rng((cfg.seed, 102)), cfg.num_classes, cfg.d_a)
    transient = _unit_rows(np.random.default_rng((cfg.seed, 103)), cfg.num_classes, cfg.d_a)
    return video, audio, transient


def _place_segments(rng, length, count, len_range):
    """Non-overlapping segments (start, end inclusive, snippet units) with
    at least one background snippet between consecutive segments."""
    if count == 0:
        return []
    lengths = rng.integers(len_range[0], len_range[1] + 1, size=count)
    free = length - int(lengths.sum()) - (count - 1)
    if free < 0:
        raise GenerationError(
            f"{count} action(s) totalling {lengths.sum()} snippets plus gaps "
            f"do not fit in {length} snippets"
        )
    extras = rng.multinomial(free, [1.0 / (count + 1)] * (count + 1))
    segments = []
    cursor = int(extras[0])
    for i in range(count):
        start = cursor
        end = start + int(lengths[i]) - 1
        segments.append((start, end))
        cursor = end + 2 + int(extras[i + 1])  # one guaranteed gap snippet
    return segments


def _covered_audio_rows(a_centers, t_start, t_end):
    lo = int(np.searchsorted(a_centers, t_start, side="left"))
    hi = int(np.searchsorted(a_centers, t_end, side="right"))
    return lo, hi


def generate_episode(
    cfg: SynthConfig, episode: int
) -> tuple[FeatureSequence, FeatureSequence, GroundTruth]:
    """Generate one episode: video features, audio features, ground truth.

    `episode` indexes the per-episode seed stream; the same (config,
    episode) always yields bit-identical output.
    """
    vsig, asig, tsig = class_signatures(cfg)
    rng = np.random.default_rng((cfg.seed, 200, episode))
    v_timing = cfg.video_timing
    a_timing = cfg.audio_timing

    length = int(rng.integers(cfg.episode_snippets[0], cfg.episode_snippets[1] + 1))
    count = int(rng.integers(cfg.actions_per_episode[0], cfg.actions_per_episode[1] + 1))
    spans = _place_segments(rng, length, count, cfg.action_snippets)
    labels = rng.integers(1, cfg.num_classes + 1, size=count)

    duration = (length - 1) * v_timing.hop + v_timing.window
    if cfg.audio_hop is None:
        a_length = length
    else:
        a_length = max(1, int(np.ceil((duration - a_timing.window) / a_timing.hop)) + 1)
    a_centers = np.array([a_timing.center(i) for i in range(a_length)])

    video = rng.normal(0.0, cfg.noise_sigma, size=(length, cfg.d_v))
    audio = rng.normal(0.0, cfg.noise_sigma, size=(a_length, cfg.d_a))

    segments = []
    for (start, end), cls in zip(spans, labels):
        cls = int(cls)
        t_start = v_timing.snippet_interval(start)[0]
        t_end = v_timing.snippet_interval(end)[1]
        segments.append(Segment(t_start=t_start, t_end=t_end, label=str(cls)))
        video[start : end + 1] += vsig[cls - 1]

        if rng.random() < cfg.audio_informativeness:
            lo, hi = _covered_audio_rows(a_centers, t_start, t_end)
            if hi > lo:
                audio[lo:hi] += asig[cls - 1]
                audio[lo] += cfg.transient_boost * tsig[cls - 1]
                audio[hi - 1] += cfg.transient_boost * tsig[cls - 1]
        else:
            # Ambient burst, independent of the segment: a counterfeit of a
            # random class's audio signature at a random position.
            fake = int(rng.integers(1, cfg.num_classes + 1))
            pos = int(rng.integers(0, a_length))
            blen = int(rng.integers(cfg.action_snippets[0], cfg.action_snippets[1] + 1))
            stop = min(pos + blen, a_length)
            audio[pos:stop] += asig[fake - 1]
            audio[pos] += cfg.transient_boost * tsig[fake - 1]
            audio[stop - 1] += cfg.transient_boost * tsig[fake - 1]

    video_seq = FeatureSequence(modality=Modality.VIDEO, data=video, timing=v_timing)
    audio_seq = FeatureSequence(modality=Modality.AUDIO, data=audio, timing=a_timing)
    gt = GroundTruth(video_id=f"ep{episode:05d}", duration=duration, segments=tuple(segments))
    return video_seq, audio_seq, gt


# ---------------------------------------------------------------------------
# Dataset materialization and manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEpisode:
    video_id: str
    split: str
    video_path: Path
    audio_path: Path


@dataclass(frozen=True)
class Manifest:
    root: Path
    num_classes: int
    seed: int
    episodes: tuple[ManifestEpisode, ...]
    annotations: dict[str, Path]

    def split(self, name: str) -> tuple[ManifestEpisode, ...]:
        return tuple(e for e in self.episodes if e.split == name)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(str(c) for c in range(1, self.num_classes + 1))


def generate_dataset(cfg: SynthConfig, n_train: int, n_test: int, out_dir) -> Manifest:
    """Materialize a train/test dataset under out_dir; returns the manifest.

    Layout: features/<id>.{video,audio}.mmfs, per-split annotation files,
    and manifest.jsonl listing everything with paths relative to out_dir.
    Episode indices 0..n_train-1 are the train split, the rest the test
    split (disjoint by construction).
    """
    if n_train < 0 or n_test < 0 or n_train + n_test < 1:
        raise ValidationError("need a non-negative split with at least one episode")
    root = Path(out_dir)
    (root / "features").mkdir(parents=True, exist_ok=True)

    episodes = []
    gts = {"train": [], "test": []}
    for idx in range(n_train + n_test):
        split = "train" if idx < n_train else "test"
        video, audio, gt = generate_episode(cfg, idx)
        video_rel = Path("features") / f"{gt.video_id}.video.mmfs"
        audio_rel = Path("features") / f"{gt.video_id}.audio.mmfs"
        write_features(video, root / video_rel)
        write_features(audio, root / audio_rel)
        gts[split].append(gt)
        episodes.append(
            ManifestEpisode(
                video_id=gt.video_id, split=split, video_path=video_rel, audio_path=audio_rel
            )
        )

    annotations = {}
    for split in ("train", "test"):
        rel = Path(f"{split}_annotations.jsonl")
        write_ground_truth(gts[split], root / rel)
        annotations[split] = rel

    with open(root / "manifest.jsonl", "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {"record": "dataset", "num_classes": cfg.num_classes, "seed": cfg.seed}
            )
            + "\n"
        )
        for split, rel in annotations.items():
            fh.write(
                json.dumps({"record": "annotations", "split": split, "path": rel.as_posix()})
                + "\n"
            )
        for ep in episodes:
            fh.write(
                json.dumps(
                    {
                        "record": "episode",
                        "video_id": ep.video_id,
                        "split": ep.split,
                        "video": ep.video_path.as_posix(),
                        "audio": ep.audio_path.as_posix(),
                    }
                )
                + "\n"
            )
    return Manifest(
        root=root,
        num_classes=cfg.num_classes,
        seed=cfg.seed,
        episodes=tuple(episodes),
        annotations=annotations,
    )


def read_manifest(path) -> Manifest:
    """Read a manifest.jsonl; episode/annotation paths stay root-relative."""
    path = Path(path)
    root = path.parent
    num_classes = None
    seed = 0
    episodes = []
    annotations: dict[str, Path] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.get("record")
            if kind == "dataset":
                num_classes = obj["num_classes"]
                seed = obj.get("seed", 0)
            elif kind == "annotations":
                annotations[obj["split"]] = Path(obj["path"])
            elif kind == "episode":
                episodes.append(
                    ManifestEpisode(
                        video_id=obj["video_id"],
                        split=obj["split"],
                        video_path=Path(obj["video"]),
                        audio_path=Path(obj["audio"]),
                    )
                )
            else:
                raise FormatError(f"{path}: line {lineno}: unknown record kind {kind!r}")
    if num_classes is None:
        raise FormatError(f"{path}: missing dataset record")
    return Manifest(
        root=root,
        num_classes=num_classes,
        seed=seed,
        episodes=tuple(episodes),
        annotations=annotations,
    )
