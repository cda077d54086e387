"""Time-based operations on segmentations.

Transfers predicted segment scores onto ground-truth segments by overlap
duration, aggregates segment scores into a meeting score, estimates the
correlation ceiling imposed by a predicted segmentation, and compares
boundary placements.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import ScoredSegmentation, Segmentation
from .metrics import CorrelationResult, correlate

SPAN_TOL = 1e-6
SLIVER = 1e-9


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Overlap:
    gt_index: int
    pred_index: int
    duration: float


@dataclass(frozen=True)
class AlignedScores:
    values: tuple

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def overlap_matrix(gt: Segmentation, pred: Segmentation) -> np.ndarray:
    """``D[i, j]`` = seconds shared by GT segment ``i`` and predicted segment ``j``."""
    if abs(gt.total_span - pred.total_span) > SPAN_TOL:
        raise AlignmentError(
            f"segmentations span different intervals ({gt.total_span} vs {pred.total_span})")
    gs, ge = gt.starts, gt.ends
    ps, pe = pred.starts, pred.ends
    d = np.minimum(ge[:, None], pe[None, :]) - np.maximum(gs[:, None], ps[None, :])
    d[d < SLIVER] = 0.0
    return d


def overlaps(gt: Segmentation, pred: Segmentation) -> list:
    d = overlap_matrix(gt, pred)
    return [Overlap(int(i), int(j), float(d[i, j])) for i, j in zip(*np.nonzero(d))]


def align(gt: Segmentation, pred: ScoredSegmentation) -> AlignedScores:
    """Overlap-duration-weighted mean of predicted scores for each GT segment."""
    d = overlap_matrix(gt, pred.segmentation)
    s = np.asarray(pred.scores, dtype=float)
    mass = d.sum(axis=1)
    if np.any(mass <= 0):
        raise AlignmentError("ground-truth segment with zero duration")
    out = []
    for i in range(d.shape[0]):
        hit = d[i] > 0
        v = np.dot(d[i, hit], s[hit]) / mass[i]
        # keeps single-source and equal-score cases bit-exact
        out.append(float(np.clip(v, s[hit].min(), s[hit].max())))
    return AlignedScores(tuple(out))


def overall_effectiveness(s: ScoredSegmentation) -> float:
    """Duration-weighted mean of segment scores over the whole meeting."""
    seg = s.segmentation
    T = seg.total_span
    if T <= 0:
        raise ValueError("meeting span must be positive")
    w = seg.ends - seg.starts
    return float(np.dot(np.asarray(s.scores), w) / T)


def interval_score(s: ScoredSegmentation, start: float, end: float) -> float:
    """Duration-weighted mean score of ``s`` over ``[start, end)``."""
    seg = s.segmentation
    d = np.minimum(seg.ends, end) - np.maximum(seg.starts, start)
    d[d < SLIVER] = 0.0
    if d.sum() <= 0:
        raise AlignmentError("interval does not overlap the segmentation")
    sc = np.asarray(s.scores)
    hit = d > 0
    v = np.dot(d[hit], sc[hit]) / d.sum()
    return float(np.clip(v, sc[hit].min(), sc[hit].max()))


def roundtrip(gt: ScoredSegmentation, pred: Segmentation) -> AlignedScores:
    """GT scores pushed onto ``pred`` and aligned back onto the GT segments."""
    on_pred = align(pred, gt)
    return align(gt.segmentation, ScoredSegmentation(pred, on_pred.values))


def upper_bound(gt: ScoredSegmentation, pred: Segmentation, corr="spearman") -> CorrelationResult:
    """Approximate best achievable correlation when scoring on ``pred``.

    This is a loose bound: the GT scores are transferred to ``pred`` and
    back, and the round-tripped values are correlated with the GT scores.
    A single-segment ``pred`` yields 0 flagged as degenerate.
    """
    back = roundtrip(gt, pred)
    return correlate(gt.scores, back.values, corr)


@dataclass(frozen=True)
class BoundaryConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def confusion_from_boundaries(gt_boundaries, pred_boundaries, n_utterances) -> BoundaryConfusion:
    gaps = n_utterances - 1
    g, p = set(gt_boundaries), set(pred_boundaries)
    if any(not 0 <= b < gaps for b in g | p):
        raise ValueError("boundary position outside the transcript")
    tp = len(g & p)
    fp = len(p - g)
    fn = len(g - p)
    return BoundaryConfusion(tp, fp, fn, gaps - tp - fp - fn)


def boundary_confusion(gt, pred) -> BoundaryConfusion:
    """Treat each gap between adjacent utterances as a boundary/no-boundary decision."""
    if gt.n_utterances != pred.n_utterances or (
            gt.meeting_id and pred.meeting_id and gt.meeting_id != pred.meeting_id):
        raise ValueError("segmentations belong to different transcripts")
    return confusion_from_boundaries(gt.boundaries, pred.boundaries, gt.n_utterances)
