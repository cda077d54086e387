"""Data model for meetings, segmentations, objectives and human annotations.

Also reads and writes the toolkit's JSON dataset format::

    {"meetings": [{"meeting_id": ..., "utterances": [...], "segments": [...],
                   "annotations": {...}, "objective_gt": [...]}]}

Time model
----------
Segment ``i`` covers ``[start of its first utterance, start of the first
utterance of segment i+1)``; the last segment ends at the end of the final
utterance, which is also the meeting span ``T``.  The first boundary is
clamped to 0.  This makes every segmentation an exact partition of
``[0, T]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

NUM_OBJECTIVES = 19
SCORE_MIN, SCORE_MAX = 1, 5
SOURCES = ("ground_truth", "predicted")


class DatasetError(ValueError):
    """Schema or invariant violation in a dataset file."""

    def __init__(self, message, meeting_id=None, record=None):
        self.meeting_id = meeting_id
        self.record = record
        self.message = message
        prefix = f"[{meeting_id}] " if meeting_id is not None else ""
        suffix = f" (record: {json.dumps(record, default=str)})" if record is not None else ""
        super().__init__(prefix + message + suffix)


class SegmentationError(ValueError):
    """A segmentation violates contiguity, coverage or duration invariants."""


@dataclass(frozen=True)
class Utterance:
    id: int
    speaker: str
    start_time: float
    end_time: float
    text: str
    source_id: Optional[int] = None

    def __post_init__(self):
        if self.end_time < self.start_time:
            raise ValueError(f"utterance {self.id}: end_time < start_time")
        if self.start_time < 0:
            raise ValueError(f"utterance {self.id}: negative start_time")


@dataclass(frozen=True)
class Transcript:
    meeting_id: str
    utterances: tuple

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if not self.utterances:
            raise ValueError(f"transcript {self.meeting_id} is empty")
        for pos, u in enumerate(self.utterances):
            if u.id != pos:
                raise ValueError(f"transcript {self.meeting_id}: utterance ids must be 0..n-1")
            if pos and u.start_time < self.utterances[pos - 1].start_time:
                raise ValueError(f"transcript {self.meeting_id}: utterances not sorted by start_time")
        if self.total_span <= 0:
            raise ValueError(f"transcript {self.meeting_id}: total span must be positive")

    def __len__(self):
        return len(self.utterances)

    @property
    def total_span(self) -> float:
        return float(self.utterances[-1].end_time)

    @property
    def start_times(self) -> np.ndarray:
        return np.array([u.start_time for u in self.utterances], dtype=float)


@dataclass(frozen=True)
class Segment:
    start_id: int
    end_id: int
    start_time: float
    end_time: float
    topic: str = ""
    description: str = ""

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time

    @property
    def span(self) -> tuple:
        return (self.start_id, self.end_id)


@dataclass(frozen=True)
class Segmentation:
    """Contiguous partition of a transcript's utterances (and of ``[0, T]``)."""

    segments: tuple
    source: str = "ground_truth"
    meeting_id: str = ""
    n_utterances: int = 0
    repairs: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.source not in SOURCES:
            raise ValueError(f"unknown segmentation source {self.source!r}")
        if not self.segments:
            raise SegmentationError("empty segmentation")
        if self.n_utterances == 0:
            object.__setattr__(self, "n_utterances", self.segments[-1].end_id + 1)
        if self.segments[0].start_id != 0:
            raise SegmentationError("segmentation does not start at utterance 0 (full coverage)")
        if self.segments[-1].end_id != self.n_utterances - 1:
            raise SegmentationError("segmentation does not end at the last utterance (full coverage)")
        if self.segments[0].start_time != 0.0:
            raise SegmentationError("first segment must start at t=0")
        for j, seg in enumerate(self.segments):
            if seg.start_id > seg.end_id:
                raise SegmentationError(f"segment {j}: start_id > end_id")
            if not seg.end_time > seg.start_time:
                raise SegmentationError(f"segment {j}: zero or negative duration")
            if j:
                prev = self.segments[j - 1]
                if seg.start_id != prev.end_id + 1:
                    raise SegmentationError(
                        f"non-contiguous segmentation: segment {j - 1} ends at {prev.end_id}, "
                        f"segment {j} starts at {seg.start_id}")
                if seg.start_time != prev.end_time:
                    raise SegmentationError(f"segment {j}: time intervals do not abut")

    @classmethod
    def from_spans(cls, transcript: Transcript, spans: Iterable, source="ground_truth",
                   topics: Optional[Sequence[str]] = None,
                   descriptions: Optional[Sequence[str]] = None, repairs=()) -> "Segmentation":
        """Build a segmentation from inclusive ``(start_id, end_id)`` utterance spans."""
        spans = [(int(a), int(b)) for a, b in spans]
        if not spans:
            raise SegmentationError("empty segmentation")
        starts = transcript.start_times
        T = transcript.total_span
        for j, (a, b) in enumerate(spans):
            if not (0 <= a < len(transcript)) or not (0 <= b < len(transcript)):
                raise SegmentationError(f"segment {j} references a nonexistent utterance id")
        segs = []
        for j, (a, b) in enumerate(spans):
            t0 = 0.0 if j == 0 else float(starts[a])
            t1 = T if j == len(spans) - 1 else float(starts[spans[j + 1][0]])
            segs.append(Segment(a, b, t0, t1,
                                topics[j] if topics else "",
                                descriptions[j] if descriptions else ""))
        return cls(tuple(segs), source, transcript.meeting_id, len(transcript), tuple(repairs))

    @classmethod
    def monolithic(cls, transcript: Transcript, source="predicted") -> "Segmentation":
        return cls.from_spans(transcript, [(0, len(transcript) - 1)], source)

    @classmethod
    def per_utterance(cls, transcript: Transcript, source="predicted") -> "Segmentation":
        return cls.from_spans(transcript, [(i, i) for i in range(len(transcript))], source)

    def __len__(self):
        return len(self.segments)

    @property
    def spans(self) -> list:
        return [s.span for s in self.segments]

    @property
    def total_span(self) -> float:
        return self.segments[-1].end_time

    @property
    def starts(self) -> np.ndarray:
        return np.array([s.start_time for s in self.segments], dtype=float)

    @property
    def ends(self) -> np.ndarray:
        return np.array([s.end_time for s in self.segments], dtype=float)

    @property
    def boundaries(self) -> frozenset:
        """Gap positions ``g`` (between utterance g and g+1) that start a new segment."""
        return frozenset(s.start_id - 1 for s in self.segments[1:])

    def labels(self) -> np.ndarray:
        """Segment index of every utterance."""
        out = np.empty(self.n_utterances, dtype=int)
        for j, s in enumerate(self.segments):
            out[s.start_id:s.end_id + 1] = j
        return out


@dataclass(frozen=True)
class ScoredSegmentation:
    segmentation: Segmentation
    scores: tuple

    def __post_init__(self):
        scores = tuple(float(s) for s in self.scores)
        object.__setattr__(self, "scores", scores)
        if len(scores) != len(self.segmentation):
            raise ValueError("one score per segment required")
        for s in scores:
            if not SCORE_MIN <= s <= SCORE_MAX:
                raise ValueError(f"score {s} outside [{SCORE_MIN}, {SCORE_MAX}]")


@dataclass(frozen=True)
class ObjectiveSet:
    labels: frozenset
    cap: int = 3
    rounds: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(int(x) for x in self.labels))
        if self.cap < 1:
            raise ValueError("cap must be positive")
        if len(self.labels) > self.cap:
            raise ValueError(f"{len(self.labels)} objectives exceed the cap of {self.cap}")
        bad = [x for x in self.labels if not 1 <= x <= NUM_OBJECTIVES]
        if bad:
            raise ValueError(f"objective labels outside 1..{NUM_OBJECTIVES}: {sorted(bad)}")


@dataclass(frozen=True)
class ObjectiveSlot:
    name: str
    allowed_labels: frozenset

    def __post_init__(self):
        object.__setattr__(self, "allowed_labels", frozenset(int(x) for x in self.allowed_labels))
        if not self.allowed_labels:
            raise ValueError(f"objective slot {self.name!r} has no permissible labels")
        if any(not 1 <= x <= NUM_OBJECTIVES for x in self.allowed_labels):
            raise ValueError(f"objective slot {self.name!r} has labels outside 1..{NUM_OBJECTIVES}")


@dataclass(frozen=True)
class ObjectiveGroundTruth:
    slots: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))

    @property
    def names(self) -> list:
        return [s.name for s in self.slots]


@dataclass(frozen=True)
class AnnotationMatrix:
    """Per-segment ratings (rows) from ``k`` raters (columns)."""

    ratings: tuple
    raters: tuple = ()
    served_objectives: tuple = ()

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.ratings)
        object.__setattr__(self, "ratings", rows)
        if not rows:
            raise ValueError("empty annotation matrix")
        k = len(rows[0])
        if k == 0 or any(len(r) != k for r in rows):
            raise ValueError("annotation matrix is incomplete")
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if not SCORE_MIN <= v <= SCORE_MAX:
                    rater = self.raters[j] if j < len(self.raters) else j
                    raise ValueError(f"rating {v} out of 1..5 at segment {i}, rater {rater}")
        if not self.raters:
            object.__setattr__(self, "raters", tuple(f"r{j}" for j in range(k)))
        else:
            object.__setattr__(self, "raters", tuple(self.raters))
            if len(self.raters) != k:
                raise ValueError("rater list does not match matrix width")
        served = tuple(frozenset(s) for s in self.served_objectives)
        if served and len(served) != len(rows):
            raise ValueError("served_objectives must have one entry per segment")
        object.__setattr__(self, "served_objectives", served)

    @property
    def segment_count(self) -> int:
        return len(self.ratings)

    @property
    def rater_count(self) -> int:
        return len(self.ratings[0])

    def as_array(self) -> np.ndarray:
        return np.array(self.ratings, dtype=float)


def mean_annotation_scores(a: AnnotationMatrix) -> list:
    """Arithmetic mean of each segment's ratings."""
    arr = a.as_array()
    if arr.size == 0:
        raise ValueError("empty annotation matrix")
    return [float(np.mean(row)) for row in arr]


@dataclass(frozen=True)
class MeetingRecord:
    transcript: Transcript
    segmentation: Optional[Segmentation] = None
    annotations: Optional[AnnotationMatrix] = None
    objective_gt: Optional[ObjectiveGroundTruth] = None
    meeting_class: Optional[str] = None
    annotator_group: Optional[str] = None
    reference_boundaries: Optional[frozenset] = None

    @property
    def meeting_id(self) -> str:
        return self.transcript.meeting_id

    def scored_gt(self) -> ScoredSegmentation:
        if self.segmentation is None or self.annotations is None:
            raise ValueError(f"meeting {self.meeting_id} has no annotated segmentation")
        return ScoredSegmentation(self.segmentation, mean_annotation_scores(self.annotations))


# -- loading ---------------------------------------------------------------

def _req(obj, key, typ, mid, what):
    if not isinstance(obj, dict) or key not in obj:
        raise DatasetError(f"{what}: missing field {key!r}", mid, obj)
    val = obj[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or isinstance(val, bool) and typ is not bool:
        raise DatasetError(f"{what}: field {key!r} has wrong type", mid, obj)
    return val


def _parse_meeting(raw) -> MeetingRecord:
    if not isinstance(raw, dict):
        raise DatasetError("meeting entry is not an object", None, raw)
    mid = _req(raw, "meeting_id", str, None, "meeting")
    utts_raw = _req(raw, "utterances", list, mid, "meeting")
    if not utts_raw:
        raise DatasetError("transcript has no utterances", mid)
    parsed = []
    for u in utts_raw:
        uid = _req(u, "id", int, mid, "utterance")
        start = _req(u, "start", float, mid, "utterance")
        end = _req(u, "end", float, mid, "utterance")
        if end < start or start < 0:
            raise DatasetError("utterance has invalid times", mid, u)
        parsed.append((start, uid, _req(u, "speaker", str, mid, "utterance"), end,
                       _req(u, "text", str, mid, "utterance")))
    if len({p[1] for p in parsed}) != len(parsed):
        raise DatasetError("duplicate utterance ids", mid)
    parsed.sort(key=lambda p: (p[0], p[1]))
    id_map = {p[1]: pos for pos, p in enumerate(parsed)}
    utts = tuple(Utterance(pos, spk, start, end, text, source_id=uid)
                 for pos, (start, uid, spk, end, text) in enumerate(parsed))
    try:
        transcript = Transcript(mid, utts)
    except ValueError as exc:
        raise DatasetError(str(exc), mid) from None

    def remap(rec, key):
        old = _req(rec, key, int, mid, "segment")
        if old not in id_map:
            raise DatasetError(f"segment {key} references unknown utterance id {old}", mid, rec)
        return id_map[old]

    segmentation = None
    if raw.get("segments") is not None:
        segs_raw = _req(raw, "segments", list, mid, "meeting")
        spans, topics, descs = [], [], []
        for s in segs_raw:
            spans.append((remap(s, "start_id"), remap(s, "end_id")))
            topics.append(str(s.get("topic", "")))
            descs.append(str(s.get("description", "")))
        for j in range(1, len(spans)):
            if spans[j][0] != spans[j - 1][1] + 1:
                raise DatasetError(
                    f"non-contiguous segmentation between segments {j - 1} and {j}", mid, segs_raw[j])
        try:
            segmentation = Segmentation.from_spans(transcript, spans, "ground_truth", topics, descs)
        except (SegmentationError, ValueError) as exc:
            raise DatasetError(str(exc), mid) from None

    annotations = None
    if raw.get("annotations") is not None:
        ann = _req(raw, "annotations", dict, mid, "meeting")
        scores = _req(ann, "scores", list, mid, "annotations")
        raters = ann.get("raters") or []
        for i, row in enumerate(scores):
            if not isinstance(row, list) or any(
                    not isinstance(v, int) or isinstance(v, bool) for v in row):
                raise DatasetError(f"annotations: scores row {i} is not a list of integers", mid, row)
            for j, v in enumerate(row):
                if not SCORE_MIN <= v <= SCORE_MAX:
                    rater = raters[j] if j < len(raters) else j
                    raise DatasetError(
                        f"rating {v} out of 1..5 at segment {i}, rater {rater}", mid, row)
        if segmentation is None:
            raise DatasetError("annotations given without segments", mid)
        if len(scores) != len(segmentation):
            raise DatasetError(
                f"annotations have {len(scores)} rows but there are {len(segmentation)} segments", mid)
        try:
            annotations = AnnotationMatrix(scores, tuple(raters),
                                           tuple(ann.get("served_objectives") or ()))
        except ValueError as exc:
            raise DatasetError(str(exc), mid) from None

    objective_gt = None
    if raw.get("objective_gt") is not None:
        slots = []
        for s in _req(raw, "objective_gt", list, mid, "meeting"):
            try:
                slots.append(ObjectiveSlot(_req(s, "name", str, mid, "objective_gt"),
                                           frozenset(_req(s, "allowed_labels", list, mid, "objective_gt"))))
            except ValueError as exc:
                raise DatasetError(str(exc), mid, s) from None
        objective_gt = ObjectiveGroundTruth(tuple(slots))

    reference = None
    if raw.get("reference_segments") is not None:
        reference = reference_boundaries(
            [(remap(s, "start_id"), remap(s, "end_id")) for s in raw["reference_segments"]],
            len(transcript))

    return MeetingRecord(transcript, segmentation, annotations, objective_gt,
                         raw.get("meeting_class"), raw.get("annotator_group"), reference)


def reference_boundaries(spans, n_utterances) -> frozenset:
    """Boundary gap positions implied by possibly discontinuous spans.

    Every span start (other than utterance 0) and every span end (other than
    the last utterance) marks a boundary.
    """
    out = set()
    for a, b in spans:
        if a > 0:
            out.add(a - 1)
        if b < n_utterances - 1:
            out.add(b)
    return frozenset(out)


def _read_json(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict) or not isinstance(data.get("meetings"), list):
        raise DatasetError("top level must be an object with a 'meetings' list")
    return data


def load_dataset(path) -> list:
    """Load and validate every meeting in a dataset file.

    Raises
    ------
    DatasetError
        On the first schema or invariant violation, naming the meeting.
    """
    data = _read_json(path)
    records = [_parse_meeting(m) for m in data["meetings"]]
    ids = [r.meeting_id for r in records]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate meeting ids")
    return records


def validate_dataset(path) -> list:
    """Check each meeting independently; returns ``(meeting_id, error or None)`` pairs."""
    data = _read_json(path)
    results = []
    for pos, raw in enumerate(data["meetings"]):
        mid = raw.get("meeting_id", f"#{pos}") if isinstance(raw, dict) else f"#{pos}"
        try:
            _parse_meeting(raw)
            results.append((mid, None))
        except DatasetError as exc:
            detail = exc.message
            if exc.record is not None:
                detail += f" (record: {json.dumps(exc.record, default=str)})"
            results.append((mid, detail))
    return results


# -- serialization ---------------------------------------------------------

def segmentation_to_json(seg: Segmentation, transcript: Optional[Transcript] = None) -> list:
    def oid(i):
        if transcript is None:
            return i
        src = transcript.utterances[i].source_id
        return i if src is None else src
    return [{"start_id": oid(s.start_id), "end_id": oid(s.end_id),
             "topic": s.topic, "description": s.description} for s in seg.segments]


def meeting_to_json(rec: MeetingRecord) -> dict:
    t = rec.transcript
    out = {"meeting_id": t.meeting_id,
           "utterances": [{"id": u.id if u.source_id is None else u.source_id,
                           "speaker": u.speaker, "start": u.start_time, "end": u.end_time,
                           "text": u.text} for u in t.utterances]}
    if rec.meeting_class is not None:
        out["meeting_class"] = rec.meeting_class
    if rec.annotator_group is not None:
        out["annotator_group"] = rec.annotator_group
    if rec.segmentation is not None:
        out["segments"] = segmentation_to_json(rec.segmentation, t)
    if rec.annotations is not None:
        a = rec.annotations
        out["annotations"] = {"raters": list(a.raters), "scores": [list(r) for r in a.ratings],
                              "served_objectives": [sorted(s) for s in a.served_objectives]}
    if rec.objective_gt is not None:
        out["objective_gt"] = [{"name": s.name, "allowed_labels": sorted(s.allowed_labels)}
                               for s in rec.objective_gt.slots]
    if rec.reference_boundaries is not None:
        # boundaries are stored as contiguous spans, which reload to the same set
        cuts = sorted(rec.reference_boundaries)
        starts = [0] + [g + 1 for g in cuts]
        ends = cuts + [len(t) - 1]
        out["reference_segments"] = [
            {"start_id": t.utterances[a].source_id if t.utterances[a].source_id is not None else a,
             "end_id": t.utterances[b].source_id if t.utterances[b].source_id is not None else b}
            for a, b in zip(starts, ends)]
    return out


def dump_dataset(records: Iterable, path) -> None:
    payload = {"meetings": [meeting_to_json(r) for r in records]}
    Path(path).write_text(json.dumps(payload, indent=1, ensure_ascii=False), encoding="utf-8")


class CorpusConverter:
    """Interface for converters from external corpora into the dataset format.

    Subclasses implement :meth:`convert`, returning one meeting dict in the
    canonical schema per call.  No concrete converters ship with the toolkit.
    """

    name = "abstract"

    def convert(self, source) -> dict:
        raise NotImplementedError
