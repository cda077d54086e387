"""Temporal fine-grained meeting effectiveness evaluation."""
from .corpus import (AnnotationMatrix, MeetingRecord, ObjectiveGroundTruth, ObjectiveSet,
                     ObjectiveSlot, ScoredSegmentation, Segment, Segmentation, Transcript,
                     Utterance, dump_dataset, load_dataset, mean_annotation_scores)
from .metrics import (icc_2k, kendall, match_objectives, objective_metrics,
                      pairwise_correlation_matrix, pk, spearman, window_diff)
from .pipeline import RunConfig, consistency_report, run_evaluation, subset_report
from .temporal import align, boundary_confusion, overall_effectiveness, upper_bound

__version__ = "0.1.0"
