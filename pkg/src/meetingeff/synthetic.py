"""Seeded synthetic meetings for tests, demos and offline runs.

Utterance times are whole milliseconds so interval arithmetic can be checked
on an exact 1 ms grid.
"""
from __future__ import annotations

import numpy as np

from .corpus import (AnnotationMatrix, MeetingRecord, ObjectiveGroundTruth, ObjectiveSlot,
                     Segmentation, Transcript, Utterance)

SPEAKERS = ("A", "B", "C", "D")


def make_transcript(rng, meeting_id="m0", n_utterances=None, lead_silence=True) -> Transcript:
    n = int(n_utterances or rng.integers(12, 40))
    gaps = rng.integers(300, 9000, size=n)  # ms between utterance starts
    starts = np.cumsum(gaps) - (0 if lead_silence else gaps[0])
    utts = []
    for i in range(n):
        length = int(rng.integers(200, 12000))
        utts.append(Utterance(i, str(rng.choice(SPEAKERS)), starts[i] / 1000.0,
                              (starts[i] + length) / 1000.0, f"utterance {i}"))
    last = utts[-1]
    if last.end_time <= last.start_time:
        utts[-1] = Utterance(last.id, last.speaker, last.start_time, last.start_time + 1.0, last.text)
    return Transcript(meeting_id, utts)


def random_spans(rng, n, n_segments=None, min_len=1):
    """Contiguous inclusive spans covering ``0..n-1``."""
    max_segments = max(1, n // min_len)
    k = int(n_segments or rng.integers(1, min(max_segments, 10) + 1))
    k = min(k, max_segments)
    slack = n - k * min_len
    extra = np.sort(rng.integers(0, slack + 1, size=k - 1)) if k > 1 else np.array([], int)
    cuts = [min_len * (i + 1) + int(e) for i, e in enumerate(extra)]
    starts = [0] + cuts
    ends = [c - 1 for c in cuts] + [n - 1]
    return list(zip(starts, ends))


def random_segmentation(rng, transcript, source="ground_truth", n_segments=None, min_len=1):
    return Segmentation.from_spans(transcript, random_spans(rng, len(transcript), n_segments, min_len),
                                   source)


def make_meeting(rng, meeting_id, n_raters=3, meeting_class=None, annotator_group=None,
                 min_len=2) -> MeetingRecord:
    t = make_transcript(rng, meeting_id)
    seg = random_segmentation(rng, t, n_segments=int(rng.integers(3, 8)), min_len=min_len)
    latent = rng.uniform(1, 5, size=len(seg))
    ratings = np.clip(np.rint(latent[:, None] + rng.normal(0, 0.6, (len(seg), n_raters))), 1, 5)
    served = [frozenset({f"obj{int(rng.integers(1, 4))}"}) for _ in range(len(seg))]
    ann = AnnotationMatrix(ratings.astype(int).tolist(),
                           tuple(f"rater{j}" for j in range(n_raters)), served)
    slots = []
    for s in range(int(rng.integers(2, 4))):
        labels = frozenset(int(x) for x in rng.choice(np.arange(1, 20), size=int(rng.integers(1, 4)),
                                                      replace=False))
        slots.append(ObjectiveSlot(f"obj{s + 1}", labels))
    return MeetingRecord(t, seg, ann, ObjectiveGroundTruth(tuple(slots)), meeting_class,
                         annotator_group)


def make_dataset(n_meetings=5, seed=0, classes=("scenario", "non_scenario")) -> list:
    rng = np.random.default_rng(seed)
    return [make_meeting(rng, f"meeting{i:03d}", meeting_class=classes[i % len(classes)],
                         annotator_group=str(1 + i % 2))
            for i in range(n_meetings)]
