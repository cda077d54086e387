import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import minimal_meeting
from meetingeff.corpus import (AnnotationMatrix, DatasetError, ObjectiveSet, ObjectiveSlot,
                               Segmentation, SegmentationError, Transcript, Utterance,
                               dump_dataset, load_dataset, mean_annotation_scores,
                               reference_boundaries, validate_dataset)
from meetingeff.synthetic import make_dataset, make_transcript


def _transcript(starts, end):
    utts = [Utterance(i, "A", s, max(s, end if i == len(starts) - 1 else s + 0.5), "x")
            for i, s in enumerate(starts)]
    return Transcript("t", utts)


def test_minimal_file_loads_with_time_model(write_json):
    raw = {"meetings": [{
        "meeting_id": "tiny",
        "utterances": [{"id": 0, "speaker": "A", "start": 1.5, "end": 2.0, "text": "a"},
                       {"id": 1, "speaker": "B", "start": 2.5, "end": 3.0, "text": "b"},
                       {"id": 2, "speaker": "A", "start": 4.0, "end": 6.25, "text": "c"}],
        "segments": [{"start_id": 0, "end_id": 2}]}]}
    (rec,) = load_dataset(write_json(raw))
    assert len(rec.transcript) == 3
    assert rec.transcript.total_span == 6.25
    seg = rec.segmentation.segments[0]
    # the first segment is clamped to t=0, the last runs to T
    assert (seg.start_time, seg.end_time) == (0.0, 6.25)


def test_gap_in_segments_is_rejected(write_json):
    m = minimal_meeting()
    m["utterances"] += [{"id": i, "speaker": "A", "start": 20.0 + i, "end": 20.5 + i, "text": "t"}
                        for i in range(4, 8)]
    m["segments"] = [{"start_id": 0, "end_id": 4}, {"start_id": 6, "end_id": 7}]
    m.pop("annotations")
    with pytest.raises(DatasetError, match="non-contiguous segmentation") as exc:
        load_dataset(write_json({"meetings": [m]}))
    assert exc.value.meeting_id == "m1"


def test_rating_out_of_range_names_segment_and_rater(write_json):
    m = minimal_meeting(ratings=((2, 4, 5), (3, 6, 3)))
    with pytest.raises(DatasetError, match="rating 6 out of 1..5 at segment 1, rater r2"):
        load_dataset(write_json({"meetings": [m]}))


@pytest.mark.parametrize("mutate, message", [
    (lambda m: m["segments"].__setitem__(1, {"start_id": 2, "end_id": 9}), "unknown utterance id 9"),
    (lambda m: m["utterances"][1].__setitem__("end", 1.0), "invalid times"),
    (lambda m: m["utterances"][1].__setitem__("id", 0), "duplicate utterance ids"),
    (lambda m: m["annotations"]["scores"].pop(), "rows but there are 2 segments"),
    (lambda m: m["objective_gt"][0].__setitem__("allowed_labels", [20]), "outside 1..19"),
    (lambda m: m.pop("utterances"), "missing"),
])
def test_schema_errors(write_json, mutate, message):
    m = minimal_meeting()
    mutate(m)
    with pytest.raises(DatasetError, match=message):
        load_dataset(write_json({"meetings": [m]}))


def test_validate_checks_meetings_independently(write_json):
    bad = minimal_meeting("bad", ratings=((2, 4, 5), (3, 6, 3)))
    res = validate_dataset(write_json({"meetings": [minimal_meeting("good"), bad]}))
    assert res[0] == ("good", None)
    assert res[1][0] == "bad" and "rater r2" in res[1][1]


def test_unsorted_utterances_are_renumbered(write_json):
    m = minimal_meeting()
    m["utterances"] = [dict(u, id=10 + u["id"]) for u in reversed(m["utterances"])]
    m["segments"] = [{"start_id": 10, "end_id": 11}, {"start_id": 12, "end_id": 13}]
    (rec,) = load_dataset(write_json({"meetings": [m]}))
    assert [u.id for u in rec.transcript.utterances] == [0, 1, 2, 3]
    assert [u.source_id for u in rec.transcript.utterances] == [10, 11, 12, 13]
    assert rec.segmentation.spans == [(0, 1), (2, 3)]


def test_mean_annotation_scores():
    a = AnnotationMatrix([[3, 3, 3], [2, 4, 5]])
    means = mean_annotation_scores(a)
    assert means[0] == 3.0
    assert means[1] == pytest.approx(3.6667, abs=1e-4)
    assert abs(means[1] - 11 / 3) < 1e-9


def test_identical_raters_give_their_column():
    col = [1, 4, 2, 5]
    a = AnnotationMatrix([[v, v, v] for v in col])
    assert mean_annotation_scores(a) == [float(v) for v in col]


@given(st.lists(st.lists(st.integers(1, 5), min_size=3, max_size=3), min_size=1, max_size=8),
       st.permutations(range(3)))
def test_mean_scores_permutation_invariant(rows, perm):
    a = AnnotationMatrix(rows)
    b = AnnotationMatrix([[r[p] for p in perm] for r in rows])
    assert np.allclose(mean_annotation_scores(a), mean_annotation_scores(b), rtol=0, atol=1e-12)


def test_dataset_round_trip(tmp_path):
    records = make_dataset(4, seed=3)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    dump_dataset(records, p1)
    first = load_dataset(p1)
    dump_dataset(first, p2)
    assert load_dataset(p2) == first
    assert json.loads(p1.read_text()) == json.loads(p2.read_text())
    assert [r.scored_gt().scores for r in first] == [r.scored_gt().scores for r in records]


@settings(max_examples=60)
@given(st.integers(0, 10_000))
def test_segment_intervals_sum_to_span(seed):
    rng = np.random.default_rng(seed)
    t = make_transcript(rng, n_utterances=int(rng.integers(1, 30)))
    n = len(t)
    cuts = sorted(set(int(c) for c in rng.integers(1, max(n, 2), size=int(rng.integers(0, 5)))) - {0, n})
    try:
        seg = Segmentation.from_spans(t, list(zip([0] + cuts, [c - 1 for c in cuts] + [n - 1])))
    except SegmentationError:
        return  # equal start times can make a segment zero-length
    total = sum(s.duration for s in seg.segments)
    assert abs(total - t.total_span) < 1e-9


def test_segmentation_rejects_zero_duration():
    t = _transcript([0.0, 3.0, 3.0, 5.0], 9.0)
    with pytest.raises(SegmentationError, match="zero or negative duration"):
        Segmentation.from_spans(t, [(0, 0), (1, 1), (2, 3)])


def test_segmentation_labels_and_boundaries():
    t = _transcript([0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 8.0)
    seg = Segmentation.from_spans(t, [(0, 1), (2, 4), (5, 5)])
    assert seg.labels().tolist() == [0, 0, 1, 1, 1, 2]
    assert seg.boundaries == frozenset({1, 4})
    assert Segmentation.monolithic(t).boundaries == frozenset()
    assert Segmentation.per_utterance(t).boundaries == frozenset(range(5))


def test_objective_types_validate():
    with pytest.raises(ValueError, match="exceed the cap"):
        ObjectiveSet(frozenset({1, 2, 3, 4}), cap=3)
    with pytest.raises(ValueError, match="outside 1..19"):
        ObjectiveSet(frozenset({0}))
    with pytest.raises(ValueError, match="no permissible labels"):
        ObjectiveSlot("empty", frozenset())


def test_reference_boundaries_from_discontinuous_spans():
    # original subtopics may leave gaps; both edges of a gap count as boundaries
    assert reference_boundaries([(0, 3), (6, 9)], 10) == frozenset({3, 5})
    assert reference_boundaries([(0, 9)], 10) == frozenset()
