"""Evaluation runs: score segments with a judge and meta-evaluate against human ratings.

Three regimes are supported:

``gt_inputs``
    Score every ground-truth segment; correlate with the human means.
``pred_segmentation``
    Let the judge segment the transcript, score its segments, align the
    scores onto the ground-truth segments, correlate, and estimate the
    correlation ceiling of the predicted segmentation.
``external_transcripts``
    As ``pred_segmentation`` for transcripts produced elsewhere (e.g. by a
    speech front end); correlation fields are left empty without annotations.

Every aggregate in a report is recomputed from its per-segment rows and
per-meeting entries, so a persisted report can be re-derived exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import (ObjectiveSet, ScoredSegmentation, Segmentation, SegmentationError,
                     mean_annotation_scores)
from .judge.backends import BackendError, JudgeBackend
from .judge.core import (LOW_VARIANCE, CapabilityError, JudgeError, SamplingPolicy, SegmentScore,
                         classify_objectives, generate_segmentation, score_segment)
from .judge.prompts import build_effectiveness_prompt
from .metrics import (CorrelationResult, MatchResult, ObjectiveMetrics, SegMetricConfig, correlate,
                      match_objectives, objective_metrics, pairwise_correlation_matrix, pk,
                      window_diff)
from .temporal import align, roundtrip

log = logging.getLogger(__name__)

MODES = ("gt_inputs", "pred_segmentation", "external_transcripts")
OBJECTIVE_CONDITIONS = ("gt", "predicted", "none")
POOLINGS = ("global", "per_meeting_mean")
CSV_COLUMNS = ("meeting_id", "index", "start_s", "end_s", "duration_s", "gt_mean",
               "aligned_pred", "raw_pred_or_blank")
CONVENTIONS = {
    "kendall_variant": "tau-b",
    "spearman_ties": "average ranks",
    "degenerate_correlation": "0 with degenerate flag",
    "hamming_loss": "(FP+FN) from bipartite matching / (19 * meetings)",
    "segmentation_window": "k = max(2, round(n / (2 * reference segments))) utterances",
    "segmentation_aggregate": "mean over meetings",
}


class IncompleteRunError(RuntimeError):
    """Some segments failed; ``report`` holds the partial results and failure manifest."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"{len(report.failures)} item(s) failed; run incomplete")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "gt_inputs"
    objectives_condition: str = "gt"
    window: int = 1
    policy: SamplingPolicy = SamplingPolicy()
    correlation_pooling: str = "global"
    seed: int = 0
    max_inflight: int = 4
    objective_cap: int = 3
    seg_window: object = "auto"
    decoding: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.objectives_condition not in OBJECTIVE_CONDITIONS:
            raise ValueError(f"unknown objectives condition {self.objectives_condition!r}")
        if self.correlation_pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.correlation_pooling!r}")
        if self.window < 0:
            raise ValueError("window must be non-negative")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be positive")
        object.__setattr__(self, "decoding", tuple(sorted(dict(self.decoding).items())))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policy"] = self.policy.to_dict()
        d["decoding"] = dict(self.decoding)
        return d

    def digest(self, backend_identity: str) -> str:
        d = self.to_dict()
        d.pop("max_inflight")
        d["backend"] = backend_identity
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


class ResultStore:
    """Append-only JSONL log of judge results, keyed for resumption."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._data = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn final line from an interrupted write
                self._data[(rec["kind"], rec["key"], rec["config"])] = rec["value"]

    def get(self, kind, key, config):
        return self._data.get((kind, key, config))

    def put(self, kind, key, config, value):
        with self._lock:
            self._data[(kind, key, config)] = value
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"kind": kind, "key": key, "config": config,
                                         "value": value}, sort_keys=True) + "\n")


@dataclass
class SegmentRow:
    meeting_id: str
    index: int
    start_s: float
    end_s: float
    duration_s: float
    gt_mean: Optional[float] = None
    aligned_pred: Optional[float] = None
    raw_pred: Optional[float] = None
    roundtrip_gt: Optional[float] = None

    @property
    def key(self):
        return (self.meeting_id, self.index)


@dataclass
class MetaEvalReport:
    config: dict
    backend: dict
    rows: list
    meetings: list
    spearman: Optional[CorrelationResult] = None
    kendall: Optional[CorrelationResult] = None
    upper_bound: Optional[dict] = None
    segmentation_metrics: Optional[dict] = None
    objective_metrics: Optional[ObjectiveMetrics] = None
    metadata: dict = field(default_factory=dict)
    complete: bool = True
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "complete": self.complete,
            "config": self.config,
            "backend": self.backend,
            "spearman": self.spearman.to_dict() if self.spearman else None,
            "kendall": self.kendall.to_dict() if self.kendall else None,
            "upper_bound": {k: v.to_dict() for k, v in self.upper_bound.items()}
            if self.upper_bound else None,
            "segmentation_metrics": self.segmentation_metrics,
            "objective_metrics": self.objective_metrics.to_dict() if self.objective_metrics else None,
            "segments": [asdict(r) for r in self.rows],
            "meetings": self.meetings,
            "metadata": self.metadata,
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, d) -> "MetaEvalReport":
        def cr(x):
            return CorrelationResult(x["value"], x["degenerate"]) if x else None
        om = d.get("objective_metrics")
        return cls(
            config=d["config"], backend=d["backend"],
            rows=[SegmentRow(**r) for r in d["segments"]], meetings=d["meetings"],
            spearman=cr(d.get("spearman")), kendall=cr(d.get("kendall")),
            upper_bound={k: cr(v) for k, v in d["upper_bound"].items()} if d.get("upper_bound") else None,
            segmentation_metrics=d.get("segmentation_metrics"),
            objective_metrics=ObjectiveMetrics(**om) if om else None,
            metadata=d.get("metadata", {}), complete=d.get("complete", True),
            failures=d.get("failures", []))

    def segments_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        for r in self.rows:
            w.writerow([r.meeting_id, r.index, fmt(r.start_s), fmt(r.end_s), fmt(r.duration_s),
                        fmt(r.gt_mean), fmt(r.aligned_pred), fmt(r.raw_pred)])
        return buf.getvalue()

    def write(self, out_dir) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rp, sp = out / "report.json", out / "segments.csv"
        rp.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True), encoding="utf-8")
        sp.write_text(self.segments_csv(), encoding="utf-8")
        return rp, sp


# -- aggregation -----------------------------------------------------------

def correlations_from_rows(rows, pooling="global", value="aligned_pred") -> dict:
    """Spearman and Kendall between ``gt_mean`` and ``value`` over usable rows."""
    usable = [r for r in rows if r.gt_mean is not None and getattr(r, value) is not None]
    out = {}
    for kind in ("spearman", "kendall"):
        if pooling == "global":
            if len(usable) < 2:
                out[kind] = None
                continue
            out[kind] = correlate([r.gt_mean for r in usable], [getattr(r, value) for r in usable], kind)
        else:
            groups = {}
            for r in usable:
                groups.setdefault(r.meeting_id, []).append(r)
            vals = []
            for g in groups.values():
                if len(g) < 2:
                    continue
                res = correlate([r.gt_mean for r in g], [getattr(r, value) for r in g], kind)
                if not res.degenerate:
                    vals.append(res.value)
            out[kind] = CorrelationResult(float(np.mean(vals)), False) if vals \
                else CorrelationResult(0.0, True) if groups else None
    return out


def _summarize(report: MetaEvalReport, pooling: str, mode: str) -> MetaEvalReport:
    corr = correlations_from_rows(report.rows, pooling)
    report.spearman, report.kendall = corr["spearman"], corr["kendall"]
    if mode != "gt_inputs" and any(r.roundtrip_gt is not None for r in report.rows):
        ub = correlations_from_rows(report.rows, pooling, "roundtrip_gt")
        report.upper_bound = ub if ub["spearman"] is not None else None
    else:
        report.upper_bound = None
    pks = [m["pk"] for m in report.meetings if m.get("pk") is not None]
    wds = [m["wd"] for m in report.meetings if m.get("wd") is not None]
    report.segmentation_metrics = {"pk": float(np.mean(pks)), "wd": float(np.mean(wds)),
                                   "n_meetings": len(pks)} if pks else None
    matches = [MatchResult(tuple(map(tuple, m["match"]["matched_pairs"])), m["match"]["tp"],
                           m["match"]["fp"], m["match"]["fn"])
               for m in report.meetings if m.get("match")]
    report.objective_metrics = objective_metrics(matches) if matches else None
    variances = [v for m in report.meetings for v in m.get("variances", [])]
    report.metadata["distribution_variance"] = {
        "mean": float(np.mean(variances)) if variances else None,
        "low_variance_fraction": float(np.mean([v < LOW_VARIANCE for v in variances]))
        if variances else None,
    }
    report.metadata["repair_count"] = sum(m.get("repairs", 0) for m in report.meetings)
    return report


# -- running ---------------------------------------------------------------

def _now():
    return datetime.now(timezone.utc).isoformat()


def _check_inputs(records, config):
    if not records:
        raise ValueError("empty dataset")
    for r in records:
        if config.mode in ("gt_inputs", "pred_segmentation") and (
                r.segmentation is None or r.annotations is None):
            raise ValueError(f"mode {config.mode} needs segments and annotations; "
                             f"meeting {r.meeting_id} has none")
        if config.objectives_condition == "gt" and r.objective_gt is None:
            raise ValueError(f"objectives condition 'gt' needs objective_gt; "
                             f"meeting {r.meeting_id} has none")


def run_evaluation(dataset, config: RunConfig, backend: JudgeBackend, store=None) -> MetaEvalReport:
    """Run one evaluation regime over ``dataset`` (a list of MeetingRecord).

    Judge results are cached in ``store`` (a :class:`ResultStore` or a path)
    so an interrupted run resumes without re-querying finished keys.

    Raises
    ------
    IncompleteRunError
        If any judge call failed after retries; carries the partial report.
    """
    records = list(dataset)
    _check_inputs(records, config)
    if not isinstance(store, ResultStore):
        store = ResultStore(store)
    chash = config.digest(backend.identity)
    decoding = dict(config.decoding)
    started = _now()
    failures = []
    fail_lock = threading.Lock()

    def fail(kind, key, exc):
        with fail_lock:
            failures.append({"kind": kind, "key": key, "error": f"{type(exc).__name__}: {exc}"})

    def prepare(rec):
        mid = rec.meeting_id
        objectives, predicted = None, None
        if config.objectives_condition == "gt":
            objectives = rec.objective_gt.names
        elif config.objectives_condition == "predicted":
            cached = store.get("objectives", mid, chash)
            if cached is None:
                obj = classify_objectives(backend, rec.transcript, config.objective_cap, decoding)
                cached = sorted(obj.labels)
                store.put("objectives", mid, chash, cached)
            predicted = ObjectiveSet(frozenset(cached), config.objective_cap)
            objectives = predicted
        if config.mode == "gt_inputs":
            seg = rec.segmentation
        else:
            cached = store.get("segmentation", mid, chash)
            if cached is None:
                seg = generate_segmentation(backend, rec.transcript, decoding)
                store.put("segmentation", mid, chash,
                          {"spans": seg.spans, "repairs": [r.to_dict() for r in seg.repairs]})
            else:
                seg = Segmentation.from_spans(rec.transcript, cached["spans"], "predicted",
                                              repairs=tuple(cached["repairs"]))
        return objectives, predicted, seg

    prepared = {}
    with ThreadPoolExecutor(max_workers=config.max_inflight) as pool:
        futures = {rec.meeting_id: pool.submit(prepare, rec) for rec in records}
        for mid, fut in futures.items():
            try:
                prepared[mid] = fut.result()
            except CapabilityError:
                raise
            except (BackendError, JudgeError, SegmentationError) as exc:
                fail("prepare", mid, exc)

    def score_one(rec, seg, objectives, j):
        span = seg.segments[j].span
        key = f"{rec.meeting_id}|{span[0]}-{span[1]}"
        cached = store.get("score", key, chash)
        if cached is not None:
            return SegmentScore.from_dict(cached)
        prompt = build_effectiveness_prompt(rec.transcript, seg, j, config.window, objectives)
        res = score_segment(backend, prompt, config.policy, decoding)
        store.put("score", key, chash, res.to_dict())
        return res

    scores = {}
    with ThreadPoolExecutor(max_workers=config.max_inflight) as pool:
        futures = {}
        for rec in records:
            if rec.meeting_id not in prepared:
                continue
            objectives, _, seg = prepared[rec.meeting_id]
            for j in range(len(seg)):
                futures[(rec.meeting_id, j)] = pool.submit(score_one, rec, seg, objectives, j)
        for key in sorted(futures):
            try:
                scores[key] = futures[key].result()
            except CapabilityError:
                raise
            except (BackendError, JudgeError) as exc:
                fail("score", f"{key[0]}|{key[1]}", exc)

    rows, meetings = [], []
    seg_cfg = SegMetricConfig(config.seg_window)
    for rec in sorted(records, key=lambda r: r.meeting_id):
        mid = rec.meeting_id
        info = {"meeting_id": mid, "meeting_class": rec.meeting_class,
                "annotator_group": rec.annotator_group}
        meetings.append(info)
        if mid not in prepared:
            continue
        _, predicted, seg = prepared[mid]
        seg_scores = [scores.get((mid, j)) for j in range(len(seg))]
        ok = all(s is not None for s in seg_scores)
        info["variances"] = [s.variance for s in seg_scores if s is not None]
        info["repairs"] = len(seg.repairs)
        if predicted is not None:
            info["predicted_objectives"] = sorted(predicted.labels)
            if rec.objective_gt is not None:
                info["match"] = match_objectives(predicted, rec.objective_gt).to_dict()
        gt_seg = rec.segmentation
        gt_means = mean_annotation_scores(rec.annotations) if rec.annotations is not None else None
        if config.mode != "gt_inputs":
            info["predicted_segments"] = [
                {"start_id": s.start_id, "end_id": s.end_id, "start_s": s.start_time,
                 "end_s": s.end_time, "score": sc.score if sc else None}
                for s, sc in zip(seg.segments, seg_scores)]
            if gt_seg is not None:
                try:
                    info["pk"] = pk(gt_seg, seg, seg_cfg)
                    info["wd"] = window_diff(gt_seg, seg, seg_cfg)
                except ValueError as exc:
                    info["pk"] = info["wd"] = None
                    info["seg_metric_note"] = str(exc)
        if gt_seg is None:
            for j, (s, sc) in enumerate(zip(seg.segments, seg_scores)):
                rows.append(SegmentRow(mid, j, s.start_time, s.end_time, s.duration,
                                       raw_pred=sc.score if sc else None))
            continue
        if config.mode == "gt_inputs":
            aligned = [sc.score if sc else None for sc in seg_scores]
            raw = aligned
            back = [None] * len(gt_seg)
        else:
            raw = [None] * len(gt_seg)
            aligned = list(align(gt_seg, ScoredSegmentation(seg, [s.score for s in seg_scores])).values) \
                if ok else [None] * len(gt_seg)
            back = list(roundtrip(ScoredSegmentation(gt_seg, gt_means), seg).values) \
                if gt_means is not None else [None] * len(gt_seg)
        for j, s in enumerate(gt_seg.segments):
            rows.append(SegmentRow(mid, j, s.start_time, s.end_time, s.duration,
                                   gt_means[j] if gt_means else None, aligned[j], raw[j], back[j]))

    report = MetaEvalReport(
        config=config.to_dict(), backend=backend.describe(), rows=rows, meetings=meetings,
        metadata={"config_hash": chash, "started_at": started, "finished_at": _now(),
                  "conventions": CONVENTIONS},
        complete=not failures, failures=sorted(failures, key=lambda f: (f["kind"], f["key"])))
    if failures:
        # correlations on a run with holes would be biased; aggregate nothing
        report.metadata["repair_count"] = sum(m.get("repairs", 0) for m in meetings)
        raise IncompleteRunError(report)
    return _summarize(report, config.correlation_pooling, config.mode)


def subset_report(report: MetaEvalReport, meeting_class=None, meeting_ids=None) -> MetaEvalReport:
    """Recompute a report's aggregates over a subset of its meetings."""
    if meeting_class is None and meeting_ids is None:
        keep = {m["meeting_id"] for m in report.meetings}
    else:
        keep = set(meeting_ids or ())
        if meeting_class is not None:
            keep |= {m["meeting_id"] for m in report.meetings if m.get("meeting_class") == meeting_class}
    meetings = [m for m in report.meetings if m["meeting_id"] in keep]
    if not meetings:
        raise ValueError("subset selects no meetings")
    rows = [SegmentRow(**asdict(r)) for r in report.rows if r.meeting_id in keep]
    sub = MetaEvalReport(config=report.config, backend=report.backend, rows=rows,
                         meetings=meetings, metadata=dict(report.metadata),
                         complete=report.complete, failures=report.failures)
    sub.metadata["subset"] = {"meeting_class": meeting_class,
                              "meeting_ids": sorted(keep)}
    return _summarize(sub, report.config["correlation_pooling"], report.config["mode"])


@dataclass
class ConsistencyReport:
    names: list
    matrix: np.ndarray
    degenerate: np.ndarray
    human: dict

    def to_dict(self):
        return {"names": self.names, "matrix": self.matrix.tolist(),
                "degenerate": self.degenerate.tolist(),
                "human": {n: {k: v.to_dict() if v else None for k, v in c.items()}
                          for n, c in self.human.items()}}


def consistency_report(runs, names=None, kind="spearman") -> ConsistencyReport:
    """Pairwise correlation between runs' per-segment predictions, plus each run vs humans."""
    runs = list(runs)
    names = list(names) if names else [f"run{i}" for i in range(len(runs))]
    if not runs:
        raise ValueError("no runs given")
    keys = [r.key for r in runs[0].rows]
    for rep in runs[1:]:
        if [r.key for r in rep.rows] != keys:
            raise ValueError("runs do not share identical segment keys")
    vectors = [(n, [r.aligned_pred for r in rep.rows]) for n, rep in zip(names, runs)]
    if any(v is None for _, vec in vectors for v in vec):
        raise ValueError("runs contain unscored segments")
    _, mat, degen = pairwise_correlation_matrix(vectors, kind)
    human = {n: correlations_from_rows(rep.rows, rep.config.get("correlation_pooling", "global"))
             for n, rep in zip(names, runs)}
    return ConsistencyReport(names, mat, degen, human)
