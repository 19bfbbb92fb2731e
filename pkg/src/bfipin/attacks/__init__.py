"""PIN inference attacks: template matching, structure matching and a learned classifier."""

from .data import SegmentSet, build_segments, padded_window
from .model import (DA_METHODS, DOMAIN_DEFS, DigitClassifier, ModelConfig, accuracy, discriminator_loss,
                    model_train,
                    preset, untrained)
from .windtalker import AttackError, TemplateBank, class_distances, softmin, windtalker_fit, windtalker_predict
from .wink import WinkResult, candidate_digits, wink_rank, wink_scores

__all__ = [
    "AttackError", "DA_METHODS", "DOMAIN_DEFS", "DigitClassifier", "ModelConfig", "SegmentSet",
    "TemplateBank", "WinkResult", "accuracy", "build_segments", "candidate_digits", "class_distances", "discriminator_loss",
    "model_train", "padded_window", "preset", "softmin", "untrained", "windtalker_fit",
    "windtalker_predict", "wink_rank", "wink_scores",
]
