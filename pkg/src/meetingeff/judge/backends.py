"""Judge backends: remote chat-completion endpoint, deterministic mock, scripted fixtures."""
from __future__ import annotations

import abc
import json
import math
import os
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from ..corpus import ScoredSegmentation
from ..temporal import interval_score

TOKEN_ENV = "MEETINGEFF_API_KEY"
SCORE_TOKENS = ("1", "2", "3", "4", "5")


class BackendError(RuntimeError):
    """Transport-level failure talking to a judge backend."""


@dataclass(frozen=True)
class JudgeRequest:
    task: str
    key: str
    messages: list
    metadata: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class JudgeResponse:
    text: str
    score_logprobs: Optional[dict] = None
    raw: Any = None


class JudgeBackend(abc.ABC):
    identity = "abstract"
    supports_score_distribution = False
    supports_sampling = False

    @abc.abstractmethod
    def complete(self, request: JudgeRequest) -> JudgeResponse:
        ...

    def describe(self) -> dict:
        return {"identity": self.identity,
                "supports_score_distribution": self.supports_score_distribution,
                "supports_sampling": self.supports_sampling}


def _rng(seed, *parts):
    words = [int(seed) & 0xFFFFFFFF]
    for p in parts:
        words.append(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))


def two_point(score: float) -> dict:
    """Distribution on adjacent integers whose mean is exactly ``score``."""
    lo = math.floor(score)
    frac = score - lo
    if frac == 0.0:
        return {int(lo): 1.0}
    return {int(lo): 1.0 - frac, int(lo) + 1: frac}


def point_mass(score: float) -> dict:
    return {int(math.floor(score + 0.5)): 1.0}


class MockBackend(JudgeBackend):
    """Deterministic judge for offline runs.

    Modes
    -----
    ``echo_gt``
        Score a span with the duration-weighted GT score over it.
    ``constant``
        Always score ``constant``.
    ``seeded_noise``
        GT score plus Gaussian noise of scale ``sigma``, clipped to [1, 5].

    Output depends only on the request key and ``seed``, so results do not
    depend on call order or concurrency.
    """

    supports_score_distribution = True
    supports_sampling = True

    def __init__(self, mode="echo_gt", gt: Optional[Mapping[str, ScoredSegmentation]] = None,
                 constant: float = 3.0, sigma: float = 0.0, seed: int = 0, continuous: bool = True,
                 segmentation: str = "gt", objective_gt: Optional[Mapping] = None,
                 objectives: Optional[list] = None):
        if mode not in ("echo_gt", "constant", "seeded_noise"):
            raise ValueError(f"unknown mock mode {mode!r}")
        if mode != "constant" and not gt:
            raise ValueError(f"mock mode {mode!r} needs ground-truth scores")
        if not 1 <= constant <= 5:
            raise ValueError("constant score must lie in [1, 5]")
        self.mode = mode
        self.gt = dict(gt or {})
        self.constant = float(constant)
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.continuous = continuous
        self.segmentation = segmentation
        self.objective_gt = dict(objective_gt or {})
        self.objectives = objectives
        self.calls = 0
        self._lock = threading.Lock()
        extra = {"echo_gt": "", "constant": f"={constant:g}", "seeded_noise": f"={sigma:g}"}[mode]
        self.identity = f"mock:{mode}{extra}:seed={seed}:seg={segmentation}"

    @classmethod
    def from_dataset(cls, records, mode="echo_gt", **kw) -> "MockBackend":
        gt = {r.meeting_id: r.scored_gt() for r in records
              if r.segmentation is not None and r.annotations is not None}
        obj = {r.meeting_id: r.objective_gt for r in records if r.objective_gt is not None}
        return cls(mode, gt=gt, objective_gt=obj, **kw)

    def complete(self, request: JudgeRequest) -> JudgeResponse:
        with self._lock:
            self.calls += 1
        if request.task == "score":
            return self._score(request)
        if request.task == "objectives":
            return self._objectives(request)
        if request.task == "segmentation":
            return self._segment(request)
        raise BackendError(f"mock backend cannot handle task {request.task!r}")

    def target_score(self, meeting_id, span, times) -> float:
        if self.mode == "constant":
            return self.constant
        if meeting_id not in self.gt:
            raise BackendError(f"mock backend has no ground truth for meeting {meeting_id}")
        base = interval_score(self.gt[meeting_id], *times)
        if self.mode == "seeded_noise" and self.sigma > 0:
            noise = _rng(self.seed, meeting_id, span[0], span[1]).normal(0.0, self.sigma)
            base = float(np.clip(base + noise, 1.0, 5.0))
        return base

    def _score(self, request):
        md = request.metadata
        score = self.target_score(md["meeting_id"], tuple(md["span"]), tuple(md["times"]))
        dist = two_point(score) if self.continuous else point_mass(score)
        if "sample_index" in md:
            rng = _rng(self.seed, md["meeting_id"], md["span"][0], md["span"][1],
                       md["sample_index"], 7919)
            keys = sorted(dist)
            pick = int(rng.choice(keys, p=[dist[k] for k in keys]))
            return JudgeResponse(f"Score: {pick}")
        shown = max(dist, key=lambda k: (dist[k], -k))
        logprobs = {str(k): math.log(p) for k, p in dist.items() if p > 0}
        return JudgeResponse(f"Score: {shown}", logprobs)

    def _objectives(self, request):
        md = request.metadata
        cap = md.get("cap", 3)
        if self.objectives is not None:
            final = list(self.objectives)
        else:
            final = []
            gt = self.objective_gt.get(md["meeting_id"])
            for slot in (gt.slots if gt else ()):
                free = sorted(set(slot.allowed_labels) - set(final))
                if free and len(final) < cap:
                    final.append(free[0])
            if not final:
                final = [1]
        round1 = sorted(set(final) | {1, 11})
        body = {"round1": round1, "round2": sorted(set(final) | {11}), "round3": final}
        return JudgeResponse(json.dumps(body))

    def _segment(self, request):
        md = request.metadata
        mid, n = md["meeting_id"], md["n_utterances"]
        gt = self.gt.get(mid)
        strategy = self.segmentation
        if strategy in ("gt", "perturbed") and gt is None:
            strategy = "uniform"
        if strategy == "gt":
            spans = gt.segmentation.spans
        elif strategy == "monolithic":
            spans = [(0, n - 1)]
        elif strategy == "per_utterance":
            spans = [(i, i) for i in range(n)]
        elif strategy == "uniform":
            cuts = list(range(8, n, 8))
            spans = list(zip([0] + cuts, [c - 1 for c in cuts] + [n - 1]))
        elif strategy == "perturbed":
            spans = self._perturb(mid, gt.segmentation.spans, n)
        else:
            raise BackendError(f"unknown mock segmentation strategy {strategy!r}")
        body = [{"start_id": a, "end_id": b, "topic": f"topic {j}", "description": ""}
                for j, (a, b) in enumerate(spans)]
        return JudgeResponse(json.dumps(body))

    def _perturb(self, mid, spans, n):
        rng = _rng(self.seed, mid, 104729)
        starts = set()
        for a, _ in spans[1:]:
            u = rng.random()
            if u < 0.2:
                continue
            if u < 0.5:
                a += int(rng.choice([-2, -1, 1, 2]))
            if 0 < a < n:
                starts.add(a)
        for a in range(1, n):
            if rng.random() < 0.05:
                starts.add(a)
        cuts = sorted(starts)
        return list(zip([0] + cuts, [c - 1 for c in cuts] + [n - 1]))


class ScriptedBackend(JudgeBackend):
    """Replays canned responses keyed by request key.

    Each value is a response text, a ``{"text": ..., "logprobs": {...}}``
    object, or a list of those served in order (the last one repeats).
    Lookup tries the exact key, then the key without a ``#sample`` suffix,
    then ``"*"``.
    """

    def __init__(self, responses: Mapping, identity="scripted", distribution=True, sampling=True):
        self.responses = dict(responses)
        self.identity = identity
        self.supports_score_distribution = distribution
        self.supports_sampling = sampling
        self.calls = []
        self._served = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path, **kw) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data, identity=f"scripted:{Path(path).name}", **kw)

    def complete(self, request: JudgeRequest) -> JudgeResponse:
        for key in (request.key, request.key.split("#")[0], "*"):
            if key in self.responses:
                break
        else:
            raise BackendError(f"no scripted response for {request.key}")
        with self._lock:
            self.calls.append(request.key)
            entry = self.responses[key]
            if isinstance(entry, list):
                i = self._served.get(request.key, 0)
                self._served[request.key] = i + 1
                entry = entry[min(i, len(entry) - 1)]
        if isinstance(entry, dict):
            return JudgeResponse(entry.get("text", ""), entry.get("logprobs"))
        return JudgeResponse(str(entry))


def score_alternatives(logprobs_content) -> Optional[dict]:
    """Token alternatives at the last position whose token is a score digit."""
    for tok in reversed(logprobs_content or []):
        if tok.get("token", "").strip() in SCORE_TOKENS:
            alts = {}
            for alt in tok.get("top_logprobs") or [{"token": tok["token"], "logprob": tok["logprob"]}]:
                t = alt.get("token", "").strip()
                if t in SCORE_TOKENS:
                    # several tokenizations of one digit ("4", " 4") pool their mass
                    alts[t] = float(np.logaddexp(alts[t], alt["logprob"])) if t in alts else alt["logprob"]
            return alts
    return None


class RemoteBackend(JudgeBackend):
    """Chat-completion style HTTP endpoint.

    Sends ``{"model", "messages", **params}`` as JSON and reads
    ``choices[0].message.content``.  When distribution scoring is enabled,
    asks for ``logprobs``/``top_logprobs`` and extracts the alternatives at
    the score token.  The bearer token is read from ``MEETINGEFF_API_KEY``.
    """

    def __init__(self, endpoint: str, model: str = "", timeout: float = 120.0,
                 max_inflight: int = 4, distribution: bool = True, params: Optional[dict] = None,
                 transport=None):
        import httpx

        self.endpoint = endpoint
        self.model = model
        self.params = dict(params or {})
        self.supports_score_distribution = distribution
        self.supports_sampling = True
        self.identity = f"remote:{model or endpoint}"
        self._sem = threading.BoundedSemaphore(max_inflight)
        headers = {}
        token = os.environ.get(TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def payload(self, request: JudgeRequest) -> dict:
        body = {"model": self.model, "messages": request.messages}
        body.update(self.params)
        body.update(request.params)
        if request.task == "score" and self.supports_score_distribution \
                and "sample_index" not in request.metadata:
            body.setdefault("logprobs", True)
            body.setdefault("top_logprobs", 5)
        return body

    def complete(self, request: JudgeRequest) -> JudgeResponse:
        import httpx

        with self._sem:
            try:
                resp = self._client.post(self.endpoint, json=self.payload(request))
                resp.raise_for_status()
                data = resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                raise BackendError(f"{self.identity}: {exc}") from exc
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.identity}: malformed response") from exc
        alts = None
        if choice.get("logprobs"):
            alts = score_alternatives(choice["logprobs"].get("content"))
        return JudgeResponse(text, alts, data)

    def close(self):
        self._client.close()
