"""Deterministic contrastive emotion-detection training pipeline.

Three training regimes over a slot-softmax surrogate scorer: standard
prediction (SFT), pairwise contrastive calibration with voting inference, and
preference tuning (DPO / SimPO) on label-mutated rejected outputs.
"""

__version__ = "0.1.0"

from .corpus import (CANONICAL_EMOTIONS, EmotionSample, LabelSet, Track,
                     load_dataset, validate_sample)
from .features import featurize, crc_features
from .scorer import SlotScorer, TrainConfig, train
from .templates import (Prediction, PromptInstance, PromptTask, parse_crc_output,
                        parse_sp_output, render_crc, render_sp)

__all__ = [
    "CANONICAL_EMOTIONS", "EmotionSample", "LabelSet", "Track", "load_dataset",
    "validate_sample", "featurize", "crc_features", "SlotScorer", "TrainConfig",
    "train", "Prediction", "PromptInstance", "PromptTask", "parse_crc_output",
    "parse_sp_output", "render_crc", "render_sp", "__version__",
]
