"""talfuse: audio-visual fusion toolkit for temporal action localization.

Feature sequences from two modalities are aligned onto a common grid
(window-centered resampling, duplicate-and-trim, or average-and-trim),
fused along the feature dimension (concatenation or gated residual
cross-modal attention), pushed through a toy snippet localizer, and
compared under the standard mAP@IoU detection protocol.  Proposal-level
decision fusion (pool + NMS) is available as an alternative to feature
fusion.
"""

from .alignment import (
    AlignedPair,
    AlignmentMethod,
    AlignmentTrace,
    avg_trim,
    dup_trim,
    pair_by_window_centering,
)
from .core import (
    FeatureSequence,
    GroundTruth,
    Modality,
    Proposal,
    ProposalSet,
    Segment,
    SnippetTiming,
    ValidationError,
    snippet_centers,
    temporal_iou,
)
from .evaluation import EvalReport, PRESETS, average_precision, evaluate, match_predictions, per_class_delta
from .fusion import RMAttnParams, concat_fuse, rmattn_backward, rmattn_forward, rmattn_init
from .localizer import (
    ProposalConfig,
    ScorerParams,
    TrainConfig,
    TrainResult,
    generate_proposals,
    score_sequence,
    train_scorer,
)
from .proposal_fusion import nms, pool_and_nms
from .synth import GenerationError, Manifest, SynthConfig, generate_dataset, generate_episode

__version__ = "0.1.0"
