"""Meta-evaluation metrics.

Segmentation quality (Pk, WindowDiff), rank correlation (Spearman, Kendall
tau-b), inter-rater reliability ICC(2,k), and objective classification
quality (bipartite matching, Hamming loss, micro-F1).

Correlations on a zero-variance input are reported as 0 with
``degenerate=True`` instead of NaN, so batch evaluations never abort.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import stats

from .corpus import NUM_OBJECTIVES, AnnotationMatrix, ObjectiveGroundTruth, ObjectiveSet, Segmentation

CORRELATIONS = ("spearman", "kendall")


@dataclass(frozen=True)
class CorrelationResult:
    value: float
    degenerate: bool = False

    def __float__(self):
        return self.value

    def to_dict(self):
        return {"value": self.value, "degenerate": self.degenerate}


# -- segmentation ----------------------------------------------------------

@dataclass(frozen=True)
class SegMetricConfig:
    window: Union[int, str] = "auto"

    def resolve(self, n_utterances: int, n_ref_segments: int) -> int:
        if self.window == "auto":
            # half-up rounding, not banker's rounding
            return max(2, int(np.floor(n_utterances / (2 * n_ref_segments) + 0.5)))
        k = int(self.window)
        if k < 1:
            raise ValueError("window must be positive")
        return k


def _seg_labels(ref, hyp):
    r = ref.labels() if isinstance(ref, Segmentation) else np.asarray(ref)
    h = hyp.labels() if isinstance(hyp, Segmentation) else np.asarray(hyp)
    if len(r) != len(h):
        raise ValueError(f"segmentations cover different transcripts ({len(r)} vs {len(h)} utterances)")
    return r, h


def _window(ref, r, cfg):
    n_ref = len(ref) if isinstance(ref, Segmentation) else int(r.max()) + 1
    k = (cfg or SegMetricConfig()).resolve(len(r), n_ref)
    if len(r) <= k:
        raise ValueError(f"transcript of {len(r)} utterances is too short for window {k}")
    return k


def pk(ref, hyp, cfg: SegMetricConfig = None) -> float:
    """Probability that a window's endpoints are misclassified as same/different segment.

    ``ref`` and ``hyp`` are Segmentations, or arrays giving each utterance's
    segment index.
    """
    r, h = _seg_labels(ref, hyp)
    k = _window(ref, r, cfg)
    same_r = r[k:] == r[:-k]
    same_h = h[k:] == h[:-k]
    return float(np.mean(same_r != same_h))


def window_diff(ref, hyp, cfg: SegMetricConfig = None) -> float:
    """Fraction of windows whose boundary counts differ between ref and hyp."""
    r, h = _seg_labels(ref, hyp)
    k = _window(ref, r, cfg)
    # segment labels are running boundary counts
    return float(np.mean((r[k:] - r[:-k]) != (h[k:] - h[:-k])))


# -- correlation -----------------------------------------------------------

def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("correlation inputs must be 1-D and of equal length")
    if len(x) < 2:
        raise ValueError("correlation needs at least two observations")
    return x, y


def spearman(x, y) -> CorrelationResult:
    """Spearman's rho with average ranks for ties."""
    x, y = _check_pair(x, y)
    rx = stats.rankdata(x)
    ry = stats.rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    den = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if den == 0:
        return CorrelationResult(0.0, True)
    return CorrelationResult(float(np.clip(np.dot(rx, ry) / den, -1.0, 1.0)))


def kendall(x, y) -> CorrelationResult:
    """Kendall's tau-b."""
    x, y = _check_pair(x, y)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return CorrelationResult(0.0, True)
    n0 = len(x) * (len(x) - 1) // 2
    tx = sum(c * (c - 1) // 2 for c in np.unique(x, return_counts=True)[1].tolist())
    ty = sum(c * (c - 1) // 2 for c in np.unique(y, return_counts=True)[1].tolist())
    tau = stats.kendalltau(x, y, variant="b").statistic
    # concordant minus discordant is an integer; recover it and divide once so
    # identical rankings give exactly 1.0 even with ties
    s = round(tau * math.sqrt(n0 - tx) * math.sqrt(n0 - ty))
    return CorrelationResult(float(np.clip(s / math.sqrt((n0 - tx) * (n0 - ty)), -1.0, 1.0)))


def correlate(x, y, kind="spearman") -> CorrelationResult:
    if kind == "spearman":
        return spearman(x, y)
    if kind == "kendall":
        return kendall(x, y)
    raise ValueError(f"unknown correlation kind {kind!r}")


def pairwise_correlation_matrix(runs, kind="spearman"):
    """Correlation between every pair of named score vectors.

    Returns ``(names, matrix, degenerate)``; the diagonal is 1.0.
    """
    items = list(runs.items()) if isinstance(runs, Mapping) else list(runs)
    names = [n for n, _ in items]
    vecs = [np.asarray(v, dtype=float) for _, v in items]
    if any(len(v) != len(vecs[0]) for v in vecs):
        raise ValueError("all score vectors must have the same length")
    m = len(vecs)
    mat = np.eye(m)
    degen = np.zeros((m, m), dtype=bool)
    for i in range(m):
        for j in range(i + 1, m):
            res = correlate(vecs[i], vecs[j], kind)
            mat[i, j] = mat[j, i] = res.value
            degen[i, j] = degen[j, i] = res.degenerate
    return names, mat, degen


# -- agreement -------------------------------------------------------------

def icc_2k(ratings) -> CorrelationResult:
    """ICC(2,k): two-way random effects, absolute agreement, average of k raters.

    ``ratings`` is an :class:`AnnotationMatrix` or an ``(n, k)`` array with
    subjects in rows and raters in columns.
    """
    x = ratings.as_array() if isinstance(ratings, AnnotationMatrix) else np.asarray(ratings, dtype=float)
    if x.ndim != 2 or np.isnan(x).any():
        raise ValueError("ICC needs a complete 2-D ratings matrix")
    n, k = x.shape
    if n < 2 or k < 2:
        raise ValueError("ICC needs at least 2 subjects and 2 raters")
    grand = x.mean()
    ss_rows = k * np.sum((x.mean(axis=1) - grand) ** 2)
    ss_cols = n * np.sum((x.mean(axis=0) - grand) ** 2)
    ss_err = np.sum((x - grand) ** 2) - ss_rows - ss_cols
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))
    den = msr + (msc - mse) / n
    # exact zeros come out of the sums as rounding noise
    tol = 1e-12 * max(1.0, float(np.mean(x * x)))
    if msr <= tol or abs(den) <= tol:
        return CorrelationResult(0.0, True)
    return CorrelationResult(float((msr - mse) / den))


# -- objective classification ---------------------------------------------

@dataclass(frozen=True)
class MatchResult:
    matched_pairs: tuple
    tp: int
    fp: int
    fn: int

    def to_dict(self):
        return {"matched_pairs": [list(p) for p in self.matched_pairs],
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


def match_objectives(pred, gt: ObjectiveGroundTruth) -> MatchResult:
    """Maximum bipartite matching between predicted labels and GT slots.

    A predicted label may fill a slot whose ``allowed_labels`` contain it;
    each label and each slot is used at most once.  ``matched_pairs`` holds
    ``(label, slot_index)``.
    """
    labels = sorted(pred.labels if isinstance(pred, ObjectiveSet) else set(pred))
    slots = [s.allowed_labels for s in (gt.slots if gt is not None else ())]
    slot_owner = {}

    def augment(lab, seen):
        for s, allowed in enumerate(slots):
            if lab in allowed and s not in seen:
                seen.add(s)
                if s not in slot_owner or augment(slot_owner[s], seen):
                    slot_owner[s] = lab
                    return True
        return False

    for lab in labels:
        augment(lab, set())
    pairs = tuple(sorted((lab, s) for s, lab in slot_owner.items()))
    tp = len(pairs)
    return MatchResult(pairs, tp, len(labels) - tp, len(slots) - tp)


@dataclass(frozen=True)
class ObjectiveMetrics:
    hamming_loss: float
    micro_f1: float
    degenerate: bool = False

    def to_dict(self):
        return {"hamming_loss": self.hamming_loss, "micro_f1": self.micro_f1,
                "degenerate": self.degenerate}


def objective_metrics(results: Sequence[MatchResult]) -> ObjectiveMetrics:
    """Micro-F1 and Hamming loss over a collection of per-meeting matchings.

    Hamming loss counts each unmatched prediction and each unmatched slot as
    one wrong label out of 19 per meeting.
    """
    results = list(results)
    if not results:
        raise ValueError("no match results")
    tp = sum(r.tp for r in results)
    fp = sum(r.fp for r in results)
    fn = sum(r.fn for r in results)
    hamming = (fp + fn) / (NUM_OBJECTIVES * len(results))
    den = 2 * tp + fp + fn
    if den == 0:
        return ObjectiveMetrics(hamming, 0.0, True)
    return ObjectiveMetrics(hamming, 2 * tp / den)
