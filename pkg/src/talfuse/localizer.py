"""Minimal snippet-level localizer used to compare fusion schemes end to end.

A linear softmax classifier scores every snippet over C action classes
plus background (class index 0), trained by mini-batch gradient descent.
Proposals are extracted by thresholding the per-class probability tracks:
maximal runs of consecutive snippets above a threshold become proposals,
scored by the mean class probability over the run.

When a residual-attention fusion block is trained jointly, the scorer's
input gradient is pushed through the block's backward pass and both
parameter sets are updated with the same step size.  Weight decay applies
to all weight matrices; biases are exempt.

Training is single-threaded and deterministic for a fixed seed; scoring
and proposal generation are pure.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fusion
from .alignment import AlignedPair
from .core import FeatureSequence, ProposalSet, Proposal, SnippetTiming, ValidationError

__all__ = [
    "ScorerParams",
    "TrainConfig",
    "ProposalConfig",
    "TrainResult",
    "train_scorer",
    "score_sequence",
    "generate_proposals",
]


@dataclass(frozen=True)
class ScorerParams:
    """Per-snippet linear logits over background + C action classes."""

    weights: np.ndarray  # (C+1, d)
    bias: np.ndarray  # (C+1,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        b = np.asarray(self.bias, dtype=np.float64).copy()
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValidationError(f"inconsistent scorer shapes {w.shape} / {b.shape}")
        if w.shape[0] < 2:
            raise ValidationError("scorer needs background plus at least one class")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValidationError("scorer parameters must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0] - 1

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    epochs: int = 30
    batch: int = 256
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 0 or self.batch < 1 or self.l2 < 0:
            raise ValidationError(f"invalid training config {self!r}")


@dataclass(frozen=True)
class ProposalConfig:
    thresholds: tuple[float, ...]
    min_len: int = 1

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(self.thresholds))
        if not self.thresholds:
            raise ValidationError("threshold list must not be empty")
        if self.min_len < 1:
            raise ValidationError(f"min_len must be >= 1, got {self.min_len}")


@dataclass(frozen=True)
class TrainResult:
    scorer: ScorerParams
    rmattn: Optional[fusion.RMAttnParams]
    losses: tuple[float, ...]  # full-dataset objective, index 0 = before training


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _pool_snippets(dataset, joint: bool):
    """Stack every snippet row from the dataset; returns (features, labels)
    where features is (N, d) for plain training or (V, A) for joint."""
    if not dataset:
        raise ValidationError("training dataset is empty")
    feats_v, feats_a, feats, labels = [], [], [], []
    for seq, y in dataset:
        y = np.asarray(y, dtype=np.int64)
        if joint:
            if not isinstance(seq, AlignedPair):
                raise ValidationError("joint attention training needs AlignedPair items")
            if y.shape != (seq.length,):
                raise ValidationError(f"labels shape {y.shape} != sequence length {seq.length}")
            feats_v.append(seq.video.data)
            feats_a.append(seq.audio.data)
        else:
            if not isinstance(seq, FeatureSequence):
                raise ValidationError("training items must carry a FeatureSequence")
            if y.shape != (seq.length,):
                raise ValidationError(f"labels shape {y.shape} != sequence length {seq.length}")
            feats.append(seq.data)
        labels.append(y)
    y_all = np.concatenate(labels)
    if joint:
        return (np.vstack(feats_v), np.vstack(feats_a)), y_all
    return np.vstack(feats), y_all


def train_scorer(
    dataset,
    config: TrainConfig,
    num_classes: int | None = None,
    rmattn: Optional[fusion.RMAttnParams] = None,
) -> TrainResult:
    """Minimize mean softmax cross-entropy over snippets by mini-batch GD.

    dataset items are (FeatureSequence, labels) with labels in {0..C}
    (0 = background), or (AlignedPair, labels) when initial rmattn
    parameters are supplied for joint training.  Deterministic for a
    fixed config.seed.  Returns final parameters plus the loss trace
    (dataset objective before training and after each epoch).
    """
    joint = rmattn is not None
    feats, y = _pool_snippets(dataset, joint)
    if num_classes is None:
        num_classes = int(y.max()) if y.size else 0
    if num_classes < 1:
        raise ValidationError("need at least one action class")
    if y.min() < 0 or y.max() > num_classes:
        raise ValidationError(
            f"labels must lie in 0..{num_classes}, got range [{y.min()}, {y.max()}]"
        )

    if joint:
        v_all, a_all = feats
        dim = v_all.shape[1] + a_all.shape[1]
        if rmattn.d_v != v_all.shape[1] or rmattn.d_a != a_all.shape[1]:
            raise ValidationError("attention params do not match pair dimensions")
    else:
        v_all = a_all = None
        dim = feats.shape[1]
    n = y.shape[0]
    onehot = np.zeros((n, num_classes + 1))
    onehot[np.arange(n), y] = 1.0

    weights = np.zeros((num_classes + 1, dim))
    bias = np.zeros(num_classes + 1)
    att = rmattn

    def fused_rows(att_params, rows):
        if not joint:
            return feats[rows], None
        out, cache = fusion.rmattn_forward_rows(att_params, v_all[rows], a_all[rows])
        return out, cache

    decay_exempt = {"gate_bias_video", "gate_bias_audio"}

    def objective(w, b, att_params):
        x, _ = fused_rows(att_params, slice(None))
        probs = _softmax(x @ w.T + b)
        ce = -np.log(probs[np.arange(n), y] + 1e-300).mean()
        penalty = 0.5 * config.l2 * float((w**2).sum())
        if joint:
            for name, arr in att_params.to_arrays().items():
                if name not in decay_exempt:
                    penalty += 0.5 * config.l2 * float((arr**2).sum())
        return ce + penalty

    losses = [objective(weights, bias, att)]
    rng = np.random.default_rng(config.seed)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch):
            rows = order[start : start + config.batch]
            x, cache = fused_rows(att, rows)
            probs = _softmax(x @ weights.T + bias)
            delta = (probs - onehot[rows]) / rows.shape[0]
            grad_w = delta.T @ x + config.l2 * weights
            grad_b = delta.sum(axis=0)
            if joint:
                upstream = delta @ weights
                att_grads, _ = fusion.rmattn_backward(att, cache, upstream)
                new_arrays = {}
                for name, arr in att.to_arrays().items():
                    g = att_grads[name]
                    if name not in decay_exempt:
                        g = g + config.l2 * arr
                    new_arrays[name] = arr - config.lr * g
                att = fusion.RMAttnParams.from_arrays(new_arrays)
            weights = weights - config.lr * grad_w
            bias = bias - config.lr * grad_b
        losses.append(objective(weights, bias, att))

    return TrainResult(
        scorer=ScorerParams(weights=weights, bias=bias),
        rmattn=att if joint else None,
        losses=tuple(losses),
    )


def score_sequence(params: ScorerParams, seq: FeatureSequence) -> np.ndarray:
    """Softmax probabilities per snippet, shape (L, C+1); rows sum to 1."""
    if seq.dim != params.input_dim:
        raise ValidationError(
            f"sequence dim {seq.dim} does not match scorer input dim {params.input_dim}"
        )
    return _softmax(seq.data @ params.weights.T + params.bias)


def _runs_above(track: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Maximal runs (inclusive start/end indices) where track > threshold."""
    mask = np.concatenate([[False], track > threshold, [False]])
    edges = np.flatnonzero(np.diff(mask.astype(np.int8)))
    return [(int(edges[i]), int(edges[i + 1]) - 1) for i in range(0, len(edges), 2)]


def generate_proposals(
    scores: np.ndarray,
    timing: SnippetTiming,
    video_id: str,
    config: ProposalConfig,
    labels: tuple[str, ...] | None = None,
) -> ProposalSet:
    """Threshold-and-group proposal extraction from a probability matrix.

    For every action class and every threshold, maximal runs of snippets
    with class probability above the threshold (of at least min_len
    snippets) become proposals spanning the run's window edges, scored by
    the mean class probability; identical runs found at several
    thresholds are merged keeping the maximum score.  Column 0 is
    background and never proposed.  `labels` maps class index c to its
    label (defaults to str(c)).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ValidationError(f"scores must be (L, C+1) with C >= 1, got {scores.shape}")
    if not np.isfinite(scores).all() or scores.min() < 0.0 or scores.max() > 1.0:
        raise ValidationError("scores must be probabilities in [0, 1]")
    num_classes = scores.shape[1] - 1
    if labels is None:
        labels = tuple(str(c) for c in range(1, num_classes + 1))
    if len(labels) != num_classes:
        raise ValidationError(f"{len(labels)} labels for {num_classes} classes")

    proposals = []
    for c in range(1, num_classes + 1):
        track = scores[:, c]
        best: dict[tuple[int, int], float] = {}
        for tau in config.thresholds:
            for start, end in _runs_above(track, tau):
                if end - start + 1 < config.min_len:
                    continue
                score = float(track[start : end + 1].mean())
                key = (start, end)
                if key not in best or score > best[key]:
                    best[key] = score
        for (start, end), score in sorted(best.items()):
            t_start = timing.snippet_interval(start)[0]
            t_end = timing.snippet_interval(end)[1]
            proposals.append(
                Proposal(t_start=t_start, t_end=t_end, label=labels[c - 1], score=score)
            )
    return ProposalSet(video_id=video_id, proposals=tuple(proposals))
