"""Judge operations: segment scoring, objective classification, topic segmentation."""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..corpus import NUM_OBJECTIVES, ObjectiveSet, Segmentation, Transcript
from .backends import SCORE_TOKENS, JudgeBackend, JudgeRequest
from .prompts import PromptBundle, build_classification_messages, build_segmentation_messages

log = logging.getLogger(__name__)

MAX_RETRIES = 2
LOW_VARIANCE = 0.1
MODES = ("distribution_weighted", "sample_mean")


class JudgeError(RuntimeError):
    pass


class CapabilityError(JudgeError):
    pass


class JudgeParseError(JudgeError):
    """The judge's answer could not be parsed, even after retries."""

    def __init__(self, message, raw="", attempts=1):
        self.raw = raw
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempt(s)); raw response: {raw!r}")


class ObjectiveCapError(JudgeParseError):
    pass


class ObjectiveLabelError(JudgeParseError):
    pass


class SegmentationResponseError(JudgeParseError):
    pass


class _Unparseable(ValueError):
    def __init__(self, message, kind=JudgeParseError):
        self.kind = kind
        super().__init__(message)


def _ask(backend: JudgeBackend, request: JudgeRequest, parse):
    """Query with up to MAX_RETRIES re-asks of the identical prompt on parse failure."""
    for attempt in range(1, MAX_RETRIES + 2):
        resp = backend.complete(request)
        try:
            return parse(resp), attempt
        except _Unparseable as exc:
            log.warning("unparseable judge response for %s (attempt %d): %s",
                        request.key, attempt, exc)
            last, kind, text = exc, exc.kind, resp.text
    raise kind(str(last), text, MAX_RETRIES + 1)


# -- scoring ---------------------------------------------------------------

@dataclass(frozen=True)
class SamplingPolicy:
    mode: str = "distribution_weighted"
    sample_count: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")

    def to_dict(self):
        return {"mode": self.mode, "sample_count": self.sample_count, "seed": self.seed}


@dataclass(frozen=True)
class ScoreDistribution:
    """Probabilities of the scores 1..5, renormalized over those five tokens."""

    probs: tuple

    @classmethod
    def from_probabilities(cls, raw) -> "ScoreDistribution":
        p = np.array([float(raw.get(s, raw.get(str(s), 0.0))) for s in range(1, 6)])
        if np.any(p < 0) or p.sum() <= 0:
            raise ValueError("score distribution has no mass on 1..5")
        return cls(tuple(p / p.sum()))

    @classmethod
    def from_logprobs(cls, logprobs) -> "ScoreDistribution":
        lp = {t: float(v) for t, v in logprobs.items() if t.strip() in SCORE_TOKENS}
        if not lp:
            raise ValueError("no score tokens among the alternatives")
        top = max(lp.values())
        return cls.from_probabilities({int(t.strip()): math.exp(v - top) for t, v in lp.items()})

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(1, 6), self.probs))

    @property
    def variance(self) -> float:
        return float(np.dot((np.arange(1, 6) - self.mean) ** 2, self.probs))


@dataclass(frozen=True)
class SegmentScore:
    score: float
    distribution: Optional[ScoreDistribution] = None
    samples: Optional[tuple] = None
    variance: float = 0.0
    low_variance: bool = False
    attempts: int = 1

    def to_dict(self):
        return {"score": self.score,
                "distribution": list(self.distribution.probs) if self.distribution else None,
                "samples": list(self.samples) if self.samples is not None else None,
                "variance": self.variance, "low_variance": self.low_variance,
                "attempts": self.attempts}

    @classmethod
    def from_dict(cls, d):
        dist = ScoreDistribution(tuple(d["distribution"])) if d.get("distribution") else None
        samples = tuple(d["samples"]) if d.get("samples") is not None else None
        return cls(d["score"], dist, samples, d.get("variance", 0.0),
                   d.get("low_variance", False), d.get("attempts", 1))


_SCORE_RE = re.compile(r"score\s*[:=]\s*\**\s*([1-5])(?![\d.])", re.IGNORECASE)


def parse_score(text: str) -> int:
    """Integer score from a judge answer: a bare digit or a ``Score: N`` line (last wins)."""
    t = (text or "").strip()
    if t in SCORE_TOKENS:
        return int(t)
    hits = _SCORE_RE.findall(t)
    if not hits:
        raise _Unparseable("no integer score 1-5 found")
    return int(hits[-1])


def score_segment(backend: JudgeBackend, prompt: PromptBundle, policy: SamplingPolicy = SamplingPolicy(),
                  params: Optional[dict] = None) -> SegmentScore:
    """Continuous effectiveness score for one segment.

    ``distribution_weighted`` takes the expectation of the score-token
    distribution; ``sample_mean`` averages ``sample_count`` sampled answers.
    """
    meta = {"meeting_id": prompt.meeting_id, "span": list(prompt.target_span),
            "times": list(prompt.target_times), "n_utterances": prompt.n_utterances,
            "target_index": prompt.target_index}
    params = dict(params or {})
    if policy.mode == "distribution_weighted":
        if not backend.supports_score_distribution:
            raise CapabilityError(f"{backend.identity} does not expose score distributions")
        req = JudgeRequest("score", prompt.key, prompt.messages(), meta, params)

        def parse(resp):
            if not resp.score_logprobs:
                raise _Unparseable("response carries no score-token alternatives")
            try:
                return ScoreDistribution.from_logprobs(resp.score_logprobs)
            except ValueError as exc:
                raise _Unparseable(str(exc)) from None

        dist, attempts = _ask(backend, req, parse)
        score = float(np.clip(dist.mean, 1.0, 5.0))
        var = dist.variance
        return SegmentScore(score, dist, None, var, var < LOW_VARIANCE, attempts)

    if not backend.supports_sampling:
        raise CapabilityError(f"{backend.identity} does not support sampling")
    samples, attempts = [], 0
    for i in range(policy.sample_count):
        req = JudgeRequest("score", f"{prompt.key}#{i}", prompt.messages(),
                           dict(meta, sample_index=i, seed=policy.seed),
                           dict(params, seed=policy.seed + i))
        value, n = _ask(backend, req, lambda r: parse_score(r.text))
        samples.append(value)
        attempts += n
    arr = np.array(samples, dtype=float)
    var = float(arr.var())
    return SegmentScore(float(arr.mean()), None, tuple(samples), var, var < LOW_VARIANCE, attempts)


# -- objective classification ---------------------------------------------

def _extract_json(text, opener):
    closer = "}" if opener == "{" else "]"
    t = (text or "").strip()
    fence = re.search(r"```(?:json)?\s*(.*?)```", t, re.DOTALL)
    if fence:
        t = fence.group(1).strip()
    try:
        return json.loads(t)
    except json.JSONDecodeError:
        pass
    a, b = t.find(opener), t.rfind(closer)
    if a != -1 and b > a:
        try:
            return json.loads(t[a:b + 1])
        except json.JSONDecodeError:
            pass
    raise _Unparseable("no valid JSON found")


def _label_list(value, raw):
    if not isinstance(value, list):
        raise _Unparseable("round entry is not a list")
    out = []
    for v in value:
        if isinstance(v, bool):
            raise _Unparseable(f"invalid objective label {v!r}")
        if isinstance(v, str) and v.strip().isdigit():
            v = int(v.strip())
        if not isinstance(v, int):
            raise _Unparseable(f"invalid objective label {v!r}")
        out.append(v)
    return out


def parse_objectives(text: str, cap: int) -> ObjectiveSet:
    data = _extract_json(text, "{")
    if not isinstance(data, dict):
        raise _Unparseable("expected a JSON object with round1..round3")
    final_key = next((k for k in ("round3", "final", "objectives") if k in data), None)
    if final_key is None:
        raise _Unparseable("final round missing")
    rounds = tuple((k, tuple(_label_list(data[k], text)))
                   for k in ("round1", "round2", "round3") if k in data)
    final = _label_list(data[final_key], text)
    bad = [x for x in final if not 1 <= x <= NUM_OBJECTIVES]
    if bad:
        raise _Unparseable(f"objective labels outside 1..{NUM_OBJECTIVES}: {bad}", ObjectiveLabelError)
    labels = set(final)
    if len(labels) > cap:
        raise _Unparseable(f"{len(labels)} objectives selected, cap is {cap}", ObjectiveCapError)
    return ObjectiveSet(frozenset(labels), cap, rounds)


def classify_objectives(backend: JudgeBackend, transcript: Transcript, cap: int = 3,
                        params: Optional[dict] = None) -> ObjectiveSet:
    """Three-round objective classification; never clips an over-long answer."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    req = JudgeRequest("objectives", f"objectives/{transcript.meeting_id}",
                       build_classification_messages(transcript, cap),
                       {"meeting_id": transcript.meeting_id, "cap": cap,
                        "n_utterances": len(transcript)}, dict(params or {}))
    result, _ = _ask(backend, req, lambda r: parse_objectives(r.text, cap))
    return result


# -- segmentation ----------------------------------------------------------

@dataclass(frozen=True)
class Repair:
    kind: str
    segment: int
    detail: str

    def to_dict(self):
        return {"kind": self.kind, "segment": self.segment, "detail": self.detail}


def repair_spans(spans, n_utterances, start_times=None):
    """Make spans a contiguous cover of ``0..n_utterances-1`` with minimal edits.

    Rules, applied left to right after sorting by start id: an inverted span
    is flipped; a late first segment is pulled back to 0; a gap extends the
    previous segment; an overlap moves the later segment's start forward (the
    segment is dropped if nothing remains); a short tail extends the last
    segment.  With ``start_times``, a segment that would last zero seconds
    is merged into its successor.  Returns ``(spans, repairs)``.
    """
    last = n_utterances - 1
    items = []
    repairs = []
    for j, (a, b) in enumerate(spans):
        if not (0 <= a <= last and 0 <= b <= last):
            raise SegmentationResponseError(f"segment {j} references nonexistent utterance ids ({a}, {b})")
        if a > b:
            repairs.append(Repair("inverted", j, f"swapped start {a} and end {b}"))
            a, b = b, a
        items.append([a, b])
    if not items:
        raise SegmentationResponseError("empty segment list")
    order = sorted(range(len(items)), key=lambda j: (items[j][0], items[j][1]))
    if order != list(range(len(items))):
        repairs.append(Repair("reordered", 0, "segments sorted by start id"))
    items = [items[j] for j in order]
    if items[0][0] != 0:
        repairs.append(Repair("head", 0, f"first segment start {items[0][0]} -> 0"))
        items[0][0] = 0
    out = [items[0]]
    for seg in items[1:]:
        prev = out[-1]
        if seg[0] > prev[1] + 1:
            repairs.append(Repair("gap", len(out) - 1,
                                  f"end {prev[1]} -> {seg[0] - 1} to close gap before start {seg[0]}"))
            prev[1] = seg[0] - 1
        elif seg[0] <= prev[1]:
            new_start = prev[1] + 1
            if new_start > seg[1]:
                repairs.append(Repair("overlap", len(out), f"segment ({seg[0]}, {seg[1]}) "
                                      f"lies inside the previous one; dropped"))
                continue
            repairs.append(Repair("overlap", len(out), f"start {seg[0]} -> {new_start}"))
            seg[0] = new_start
        out.append(seg)
    if out[-1][1] != last:
        repairs.append(Repair("tail", len(out) - 1, f"end {out[-1][1]} -> {last}"))
        out[-1][1] = last
    if start_times is not None:
        merged = [out[0]]
        for seg in out[1:]:
            begin = 0.0 if len(merged) == 1 else start_times[merged[-1][0]]
            if start_times[seg[0]] <= begin:
                repairs.append(Repair("zero_duration", len(merged) - 1,
                                      f"merged ({merged[-1][0]}, {merged[-1][1]}) into the next segment"))
                merged[-1][1] = seg[1]
            else:
                merged.append(seg)
        out = merged
    return [tuple(s) for s in out], repairs


def parse_segments(text):
    data = _extract_json(text, "[")
    if isinstance(data, dict):
        data = data.get("segments", data)
    if not isinstance(data, list):
        raise _Unparseable("expected a JSON array of segments")
    out = []
    for s in data:
        if not isinstance(s, dict):
            raise _Unparseable("segment entry is not an object")
        try:
            a, b = int(s["start_id"]), int(s["end_id"])
        except (KeyError, TypeError, ValueError):
            raise _Unparseable("segment lacks integer start_id/end_id") from None
        out.append((a, b, str(s.get("topic", "")), str(s.get("description", ""))))
    return out


def generate_segmentation(backend: JudgeBackend, transcript: Transcript,
                          params: Optional[dict] = None) -> Segmentation:
    """Ask the judge for a topic segmentation and repair continuity violations.

    The repairs applied are kept on ``Segmentation.repairs``.
    """
    req = JudgeRequest("segmentation", f"segmentation/{transcript.meeting_id}",
                       build_segmentation_messages(transcript),
                       {"meeting_id": transcript.meeting_id, "n_utterances": len(transcript)},
                       dict(params or {}))
    raw, _ = _ask(backend, req, lambda r: parse_segments(r.text))
    if not raw:
        raise SegmentationResponseError("judge returned an empty segment list")
    spans, repairs = repair_spans([(a, b) for a, b, _, _ in raw], len(transcript),
                                  transcript.start_times)
    meta = {}
    for a, b, topic, desc in raw:
        meta.setdefault(min(a, b), (topic, desc))
    topics = [meta.get(a, ("", ""))[0] for a, _ in spans]
    descs = [meta.get(a, ("", ""))[1] for a, _ in spans]
    for r in repairs:
        log.info("segmentation repair for %s: %s", transcript.meeting_id, r.detail)
    return Segmentation.from_spans(transcript, spans, "predicted", topics, descs,
                                   tuple(repairs))
