"""Feature-dimension fusion of an aligned (video, audio) pair.

Two schemes:

* concat_fuse -- rows are [video_t || audio_t]; lossless, both inputs are
  recoverable by column slicing.
* residual multimodal attention -- each modality is refined by a gated,
  residual injection of the other modality's projected features, then the
  refined rows are concatenated.  Per timestep t:

      h_v     = tanh(Wh_v [v_t || a_t] + bh_v)
      gamma_v = sigmoid(Wo_v h_v)                    (vector gate, one per
      v'_t    = v_t + gamma_v * (C_av a_t)            video channel)

  and symmetrically for audio with its own gate and projection C_va.
  With both cross-projections zero the block reduces exactly to
  concatenation (pure residual path).  The topology is versioned via the
  checkpoint metadata so alternatives can be added.

Forward and backward are pure given (params, input); everything runs in
64-bit so analytic gradients validate against central finite differences.
"""

from dataclasses import dataclass, fields

import numpy as np

from .alignment import AlignedPair
from .core import FeatureSequence, Modality, ValidationError

__all__ = [
    "RMAttnParams",
    "RMAttnCache",
    "concat_fuse",
    "rmattn_init",
    "rmattn_forward",
    "rmattn_forward_rows",
    "rmattn_backward",
    "RMATTN_TOPOLOGY",
]

# Identifier of the fixed wiring above, recorded in checkpoints.
RMATTN_TOPOLOGY = "gated-residual-cross-v1"


@dataclass(frozen=True)
class RMAttnParams:
    """Trainable parameters of the residual multimodal attention block.

    Shapes (d_v video dim, d_a audio dim, d_h gate hidden dim):
        gate_hidden_video   (d_h, d_v + d_a)    gate_hidden_audio   (d_h, d_v + d_a)
        gate_bias_video     (d_h,)              gate_bias_audio     (d_h,)
        gate_out_video      (d_v, d_h)          gate_out_audio      (d_a, d_h)
        cross_audio_to_video (d_v, d_a)         cross_video_to_audio (d_a, d_v)
    """

    gate_hidden_video: np.ndarray
    gate_bias_video: np.ndarray
    gate_out_video: np.ndarray
    gate_hidden_audio: np.ndarray
    gate_bias_audio: np.ndarray
    gate_out_audio: np.ndarray
    cross_audio_to_video: np.ndarray
    cross_video_to_audio: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.asarray(getattr(self, f.name), dtype=np.float64).copy()
            if not np.isfinite(arr).all():
                raise ValidationError(f"{f.name} contains non-finite entries")
            arr.flags.writeable = False
            object.__setattr__(self, f.name, arr)
        d_h, total = self.gate_hidden_video.shape
        d_v, d_a = self.cross_audio_to_video.shape
        expected = {
            "gate_hidden_video": (d_h, d_v + d_a),
            "gate_bias_video": (d_h,),
            "gate_out_video": (d_v, d_h),
            "gate_hidden_audio": (d_h, d_v + d_a),
            "gate_bias_audio": (d_h,),
            "gate_out_audio": (d_a, d_h),
            "cross_audio_to_video": (d_v, d_a),
            "cross_video_to_audio": (d_a, d_v),
        }
        if total != d_v + d_a:
            raise ValidationError(
                f"gate hidden input dim {total} != d_v + d_a = {d_v + d_a}"
            )
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValidationError(f"{name} has shape {got}, expected {shape}")

    @property
    def d_v(self) -> int:
        return self.cross_audio_to_video.shape[0]

    @property
    def d_a(self) -> int:
        return self.cross_audio_to_video.shape[1]

    @property
    def d_h(self) -> int:
        return self.gate_hidden_video.shape[0]

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "RMAttnParams":
        return cls(**{f.name: arrays[f.name] for f in fields(cls)})


@dataclass(frozen=True)
class RMAttnCache:
    """Intermediates of one forward pass, as needed by the backward pass."""

    video: np.ndarray
    audio: np.ndarray
    joint: np.ndarray
    hidden_v: np.ndarray
    gate_v: np.ndarray
    cross_v: np.ndarray
    hidden_a: np.ndarray
    gate_a: np.ndarray
    cross_a: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat_fuse(pair: AlignedPair) -> FeatureSequence:
    """Concatenate the pair along the feature dimension: [video_t || audio_t]."""
    data = np.hstack([pair.video.data, pair.audio.data])
    return FeatureSequence(modality=Modality.FUSED, data=data, timing=pair.video.timing)


def rmattn_init(d_v: int, d_a: int, d_h: int | None = None, seed: int = 0) -> RMAttnParams:
    """Deterministic initialization: per-matrix uniform [-s, s] with
    s = sqrt(6 / (fan_in + fan_out)); biases zero.

    d_h defaults to min(d_v, d_a).
    """
    if d_h is None:
        d_h = min(d_v, d_a)
    if d_v < 1 or d_a < 1 or d_h < 1:
        raise ValidationError(f"dimensions must be >= 1, got d_v={d_v}, d_a={d_a}, d_h={d_h}")
    rng = np.random.default_rng(seed)

    def uniform(rows, cols):
        s = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-s, s, size=(rows, cols))

    return RMAttnParams(
        gate_hidden_video=uniform(d_h, d_v + d_a),
        gate_bias_video=np.zeros(d_h),
        gate_out_video=uniform(d_v, d_h),
        gate_hidden_audio=uniform(d_h, d_v + d_a),
        gate_bias_audio=np.zeros(d_h),
        gate_out_audio=uniform(d_a, d_h),
        cross_audio_to_video=uniform(d_v, d_a),
        cross_video_to_audio=uniform(d_a, d_v),
    )


def rmattn_forward_rows(
    params: RMAttnParams, video_rows: np.ndarray, audio_rows: np.ndarray
) -> tuple[np.ndarray, RMAttnCache]:
    """Apply the block to raw row matrices (L, d_v) and (L, d_a).

    Timesteps are independent, so any subset of rows (e.g. a training
    mini-batch) can be pushed through together.
    """
    v = np.asarray(video_rows, dtype=np.float64)
    a = np.asarray(audio_rows, dtype=np.float64)
    if v.ndim != 2 or a.ndim != 2 or v.shape[0] != a.shape[0]:
        raise ValidationError(f"row matrices disagree: {v.shape} vs {a.shape}")
    if v.shape[1] != params.d_v or a.shape[1] != params.d_a:
        raise ValidationError(
            f"input dims (d_v={v.shape[1]}, d_a={a.shape[1]}) do not match "
            f"params (d_v={params.d_v}, d_a={params.d_a})"
        )
    x = np.hstack([v, a])

    hidden_v = np.tanh(x @ params.gate_hidden_video.T + params.gate_bias_video)
    gate_v = _sigmoid(hidden_v @ params.gate_out_video.T)
    cross_v = a @ params.cross_audio_to_video.T
    v_refined = v + gate_v * cross_v

    hidden_a = np.tanh(x @ params.gate_hidden_audio.T + params.gate_bias_audio)
    gate_a = _sigmoid(hidden_a @ params.gate_out_audio.T)
    cross_a = v @ params.cross_video_to_audio.T
    a_refined = a + gate_a * cross_a

    cache = RMAttnCache(
        video=v, audio=a, joint=x,
        hidden_v=hidden_v, gate_v=gate_v, cross_v=cross_v,
        hidden_a=hidden_a, gate_a=gate_a, cross_a=cross_a,
    )
    return np.hstack([v_refined, a_refined]), cache


def rmattn_forward(
    params: RMAttnParams, pair: AlignedPair
) -> tuple[FeatureSequence, RMAttnCache]:
    """Apply the block to every timestep of an aligned pair; returns the
    fused sequence and the cache required by rmattn_backward."""
    out, cache = rmattn_forward_rows(params, pair.video.data, pair.audio.data)
    fused = FeatureSequence(modality=Modality.FUSED, data=out, timing=pair.video.timing)
    return fused, cache


def rmattn_backward(
    params: RMAttnParams, cache: RMAttnCache, upstream: np.ndarray
) -> tuple[dict[str, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Exact analytic gradients of the forward map.

    upstream is dLoss/dOutput of shape (L, d_v + d_a).  Returns a dict of
    parameter gradients (keys match RMAttnParams field names) and the
    gradients w.r.t. the video and audio inputs.
    """
    d_v, d_a = params.d_v, params.d_a
    L = cache.joint.shape[0]
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (L, d_v + d_a):
        raise ValidationError(
            f"upstream has shape {upstream.shape}, expected {(L, d_v + d_a)}"
        )
    d_vref = upstream[:, :d_v]
    d_aref = upstream[:, d_v:]

    # Video refinement path: v' = v + gate_v * cross_v.
    d_video = d_vref.copy()
    d_gate_v = d_vref * cache.cross_v
    d_cross_v = d_vref * cache.gate_v
    g_cross_av = d_cross_v.T @ cache.audio
    d_audio = d_cross_v @ params.cross_audio_to_video
    d_pre_gate_v = d_gate_v * cache.gate_v * (1.0 - cache.gate_v)
    g_gate_out_v = d_pre_gate_v.T @ cache.hidden_v
    d_hidden_v = d_pre_gate_v @ params.gate_out_video
    d_pre_hidden_v = d_hidden_v * (1.0 - cache.hidden_v**2)
    g_gate_hidden_v = d_pre_hidden_v.T @ cache.joint
    g_gate_bias_v = d_pre_hidden_v.sum(axis=0)
    d_joint = d_pre_hidden_v @ params.gate_hidden_video

    # Audio refinement path: a' = a + gate_a * cross_a.
    d_audio += d_aref
    d_gate_a = d_aref * cache.cross_a
    d_cross_a = d_aref * cache.gate_a
    g_cross_va = d_cross_a.T @ cache.video
    d_video += d_cross_a @ params.cross_video_to_audio
    d_pre_gate_a = d_gate_a * cache.gate_a * (1.0 - cache.gate_a)
    g_gate_out_a = d_pre_gate_a.T @ cache.hidden_a
    d_hidden_a = d_pre_gate_a @ params.gate_out_audio
    d_pre_hidden_a = d_hidden_a * (1.0 - cache.hidden_a**2)
    g_gate_hidden_a = d_pre_hidden_a.T @ cache.joint
    g_gate_bias_a = d_pre_hidden_a.sum(axis=0)
    d_joint = d_joint + d_pre_hidden_a @ params.gate_hidden_audio

    d_video += d_joint[:, :d_v]
    d_audio += d_joint[:, d_v:]

    grads = {
        "gate_hidden_video": g_gate_hidden_v,
        "gate_bias_video": g_gate_bias_v,
        "gate_out_video": g_gate_out_v,
        "gate_hidden_audio": g_gate_hidden_a,
        "gate_bias_audio": g_gate_bias_a,
        "gate_out_audio": g_gate_out_a,
        "cross_audio_to_video": g_cross_av,
        "cross_video_to_audio": g_cross_va,
    }
    return grads, (d_video, d_audio)
