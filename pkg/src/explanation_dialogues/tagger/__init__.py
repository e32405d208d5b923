from .crf import (
    CrfModel,
    crf_log_partition,
    crf_neg_log_likelihood_and_gradient,
    marginals,
    viterbi_decode,
)
from .features import extract_turn_features, turn_feature_names
from .training import TaggerHyper, TrainingDiverged, evaluate_tagger, train_tagger

__all__ = [
    "CrfModel",
    "TaggerHyper",
    "TrainingDiverged",
    "crf_log_partition",
    "crf_neg_log_likelihood_and_gradient",
    "evaluate_tagger",
    "extract_turn_features",
    "marginals",
    "train_tagger",
    "turn_feature_names",
    "viterbi_decode",
]
