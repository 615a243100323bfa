"""Agreement statistics for collections of classifiers.

Record what every model in an ensemble predicts at each training extent,
then ask whether the models learn the examples in a shared order.
"""

__version__ = "0.1.0"

from .compare import (ComparisonReport, binned_comparison, compare_collections, correlate_accessibility,
                      match_epochs, overlap_counts, pearson)
from .datasets import LabeledDataset
from .metrics import (accessibility, agreement, bimodality, condensed, condensed_agreement,
                      learned_epoch, learned_epoch_boxes, majority_vote, modal_label, tp_agreement,
                      trajectory)
from .nullmodel import null_from, null_log
from .predlog import Manifest, PredictionLog, create_log, load, save

__all__ = [
    "ComparisonReport", "LabeledDataset", "Manifest", "PredictionLog", "__version__", "accessibility",
    "agreement", "bimodality", "binned_comparison", "compare_collections", "condensed",
    "condensed_agreement", "correlate_accessibility", "create_log", "learned_epoch", "learned_epoch_boxes",
    "load", "majority_vote", "match_epochs", "modal_label", "null_from", "null_log", "overlap_counts",
    "pearson", "save", "tp_agreement", "trajectory",
]
