import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from meetingeff.corpus import ScoredSegmentation, Segmentation, Transcript, Utterance
from meetingeff.synthetic import make_transcript, random_spans
from meetingeff.temporal import (AlignmentError, align, boundary_confusion,
                                 confusion_from_boundaries, interval_score, overall_effectiveness,
                                 overlap_matrix, roundtrip, upper_bound)


def _tx(starts, end):
    """Utterances beginning at ``starts``; the last ends at ``end``."""
    utts = [Utterance(i, "A", float(s), float(end if i == len(starts) - 1 else s), "x")
            for i, s in enumerate(starts)]
    return Transcript("t", utts)


def ms(seg):
    return [(round(s.start_time * 1000), round(s.end_time * 1000)) for s in seg.segments]


def random_pair(rng):
    t = make_transcript(rng, n_utterances=int(rng.integers(2, 30)))
    gt = Segmentation.from_spans(t, random_spans(rng, len(t)))
    pred = Segmentation.from_spans(t, random_spans(rng, len(t)), "predicted")
    return t, gt, pred


def test_hand_example():
    t = _tx([0, 5, 10], 20)
    gt = Segmentation.from_spans(t, [(0, 1), (2, 2)])
    pred = ScoredSegmentation(Segmentation.from_spans(t, [(0, 0), (1, 2)], "predicted"), [2, 4])
    assert align(gt, pred).values == (3.0, 4.0)


def test_identity_alignment_is_exact(rng):
    for _ in range(50):
        t = make_transcript(rng)
        seg = Segmentation.from_spans(t, random_spans(rng, len(t)))
        scores = rng.uniform(1, 5, len(seg))
        assert align(seg, ScoredSegmentation(seg, scores)).values == tuple(scores)


def test_monolithic_prediction_copies_score(rng):
    t = make_transcript(rng)
    gt = Segmentation.from_spans(t, random_spans(rng, len(t)))
    out = align(gt, ScoredSegmentation(Segmentation.monolithic(t), [3.7]))
    assert set(out.values) == {3.7}


def test_matches_millisecond_grid_oracle(rng):
    for _ in range(100):
        _, gt, pred = random_pair(rng)
        scores = rng.uniform(1, 5, len(pred))
        got = align(gt, ScoredSegmentation(pred, scores)).values
        want = oracles.grid_align(ms(gt), ms(pred), scores)
        assert np.allclose(got, want, rtol=0, atol=1e-6)


@settings(max_examples=80)
@given(st.integers(0, 2**32 - 1))
def test_split_invariance_and_bounds(seed):
    rng = np.random.default_rng(seed)
    t, gt, pred = random_pair(rng)
    scores = list(rng.uniform(1, 5, len(pred)))
    base = align(gt, ScoredSegmentation(pred, scores)).values
    assert all(min(scores) <= v <= max(scores) for v in base)

    splittable = [j for j, (a, b) in enumerate(pred.spans)
                  if b > a and t.utterances[b].start_time > t.utterances[a].start_time]
    if not splittable:
        return
    j = splittable[int(rng.integers(len(splittable)))]
    a, b = pred.spans[j]
    cut = next(c for c in range(a + 1, b + 1) if t.utterances[c].start_time > t.utterances[a].start_time)
    spans = pred.spans[:j] + [(a, cut - 1), (cut, b)] + pred.spans[j + 1:]
    finer = Segmentation.from_spans(t, spans, "predicted")
    split = align(gt, ScoredSegmentation(finer, scores[:j] + [scores[j]] * 2 + scores[j + 1:])).values
    assert np.allclose(split, base, rtol=0, atol=1e-12)


def test_overall_effectiveness_hand_values():
    t = _tx([0, 30], 40)
    seg = Segmentation.from_spans(t, [(0, 0), (1, 1)])
    assert overall_effectiveness(ScoredSegmentation(seg, [2, 5])) == 2.75
    t2 = _tx([0, 10], 20)
    seg2 = Segmentation.from_spans(t2, [(0, 0), (1, 1)])
    assert overall_effectiveness(ScoredSegmentation(seg2, [3, 5])) == 4.0
    assert overall_effectiveness(ScoredSegmentation(seg2, [4.2, 4.2])) == pytest.approx(4.2, abs=1e-12)


def test_interval_score():
    t = _tx([0, 10], 20)
    s = ScoredSegmentation(Segmentation.from_spans(t, [(0, 0), (1, 1)]), [2, 4])
    assert interval_score(s, 5, 15) == 3.0
    assert interval_score(s, 12, 18) == 4.0
    with pytest.raises(AlignmentError):
        interval_score(s, 30, 40)


def test_span_mismatch_is_an_error():
    a = Segmentation.monolithic(_tx([0, 5], 10))
    b = Segmentation.monolithic(_tx([0, 5], 12))
    with pytest.raises(AlignmentError, match="different intervals"):
        overlap_matrix(a, b)


def test_overlap_matrix_rows_sum_to_durations(rng):
    for _ in range(20):
        _, gt, pred = random_pair(rng)
        d = overlap_matrix(gt, pred)
        assert np.allclose(d.sum(axis=1), gt.ends - gt.starts, atol=1e-9)
        assert np.allclose(d.sum(axis=0), pred.ends - pred.starts, atol=1e-9)


def test_upper_bound_endpoints(rng):
    t = make_transcript(rng, n_utterances=25)
    gt = Segmentation.from_spans(t, random_spans(rng, 25, 6))
    s = ScoredSegmentation(gt, [1.0, 2.0, 4.5, 3.0, 3.0, 5.0])
    for kind in ("spearman", "kendall"):
        assert upper_bound(s, Segmentation.per_utterance(t), kind).value == 1.0
        assert upper_bound(s, gt, kind).value == 1.0
        mono = upper_bound(s, Segmentation.monolithic(t), kind)
        assert mono.value == 0.0 and mono.degenerate


def test_roundtrip_on_gt_is_identity(rng):
    t = make_transcript(rng)
    gt = Segmentation.from_spans(t, random_spans(rng, len(t)))
    s = ScoredSegmentation(gt, rng.uniform(1, 5, len(gt)))
    assert roundtrip(s, gt).values == s.scores


def test_boundary_confusion_hand_example():
    c = confusion_from_boundaries({2, 5}, {2, 7}, 10)
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 6)


def test_boundary_confusion_sums_to_gaps(rng):
    for _ in range(30):
        _, gt, pred = random_pair(rng)
        c = boundary_confusion(gt, pred)
        assert c.tp + c.fp + c.fn + c.tn == gt.n_utterances - 1
        same = boundary_confusion(gt, gt)
        assert same.fp == same.fn == 0
