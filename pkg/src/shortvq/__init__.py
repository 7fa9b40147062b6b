"""Short-form video quality toolkit.

Robust multi-trial quality elicitation from a multimodal language model
(pre-processing, prompting, sampling, parsing, aggregation) and a
content-aware learned ensemble that blends its predictions with those of
existing no-reference video quality models.
"""

from .aggregate import StdDevProfile, VideoScore, aggregate_video, stddev_profile
from .datamodel import (
    PredictionTriple,
    VideoManifestEntry,
    denormalize_score,
    load_manifest,
    normalize_score,
    validate_manifest,
)
from .embeddings import EmbeddingBlock, load_embeddings, pool_features, write_embeddings
from .ensemble import (
    AdamState,
    GateModel,
    TrainConfig,
    TrainingRecord,
    adam_step,
    analyze_weights,
    blend,
    load_checkpoint,
    loss_and_gradients,
    naive_blend,
    predict_alpha,
    save_checkpoint,
    train,
)
from .frames import (
    FrameImage,
    KeyFrameSet,
    load_frame,
    random_crops,
    resize_bilinear,
    select_key_frames,
)
from .gateway import (
    HttpBackend,
    MockBackend,
    PROMPTS,
    SamplerConfig,
    TrialCache,
    TrialKey,
    TrialRecord,
    run_trial_batch,
)
from .metrics import MetricPair, metric_pair, plcc, rankify, srcc
from .parsing import filter_valid, parse_level_response, parse_score_response

__version__ = "0.1.0"
