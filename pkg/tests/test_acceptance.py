"""Acceptance criteria, one test per criterion.

Each test records a single ``criterion N: PASS|FAIL`` line (printed inline
and again in the terminal summary) before asserting.
"""
import json
import math
import os
import time

import numpy as np
import pytest

import oracles
from meetingeff.corpus import (AnnotationMatrix, NUM_OBJECTIVES, ObjectiveGroundTruth, ObjectiveSlot,
                               ScoredSegmentation, Segmentation, load_dataset)
from meetingeff.judge import MockBackend, ScriptedBackend, generate_segmentation
from meetingeff.metrics import (SegMetricConfig, icc_2k, kendall, match_objectives, pk, spearman,
                                window_diff)
from meetingeff.pipeline import RunConfig, run_evaluation
from meetingeff.synthetic import make_dataset, make_meeting, make_transcript, random_spans
from meetingeff.temporal import (align, boundary_confusion, confusion_from_boundaries,
                                 overall_effectiveness, upper_bound)

AMI_ENV = "AMI_ME_DATASET"


def _ms(seg):
    return [(round(s.start_time * 1000), round(s.end_time * 1000)) for s in seg.segments]


def test_criterion_1_alignment_exactness(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, worst_identity = 0.0, 0.0
    for _ in range(500):
        t = make_transcript(rng)
        gt = Segmentation.from_spans(t, random_spans(rng, len(t)))
        pred = Segmentation.from_spans(t, random_spans(rng, len(t)), "predicted")
        scores = rng.uniform(1, 5, len(pred))
        got = align(gt, ScoredSegmentation(pred, scores)).values
        want = oracles.grid_align(_ms(gt), _ms(pred), scores)
        worst = max(worst, float(np.max(np.abs(np.subtract(got, want)))))
        gscores = rng.uniform(1, 5, len(gt))
        same = align(gt, ScoredSegmentation(gt, gscores)).values
        worst_identity = max(worst_identity, float(np.max(np.abs(np.subtract(same, gscores)))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and worst_identity <= 1e-12 and elapsed < 10
    acceptance(1, ok, f"max grid err {worst:.2e}, identity err {worst_identity:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_overall_consistency(acceptance):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        t = make_transcript(rng)
        seg = Segmentation.from_spans(t, random_spans(rng, len(t)))
        s = ScoredSegmentation(seg, rng.uniform(1, 5, len(seg)))
        weighted = math.fsum(sc * g.duration for sc, g in zip(s.scores, seg.segments)) / t.total_span
        (mono,) = align(Segmentation.monolithic(t, "ground_truth"), s).values
        oe = overall_effectiveness(s)
        worst = max(worst, abs(oe - weighted), abs(oe - mono))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5
    acceptance(2, ok, f"max err {worst:.2e}, {elapsed:.2f}s")
    assert ok


def _refinement_chain(rng, t):
    """Monolithic -> per-utterance, adding one random boundary per step."""
    n = len(t)
    order = rng.permutation(np.arange(1, n))
    cuts = []
    chain = [Segmentation.monolithic(t)]
    for c in order:
        cuts = sorted(cuts + [int(c)])
        chain.append(Segmentation.from_spans(t, list(zip([0] + cuts, [x - 1 for x in cuts] + [n - 1])),
                                             "predicted"))
    return chain


def test_criterion_3_upper_bound_endpoints_and_refinement(acceptance):
    rng = np.random.default_rng(3)
    endpoint_failures = []
    for i in range(20):
        rec = make_meeting(rng, f"m{i}")
        gt = rec.scored_gt()
        if len(set(gt.scores)) < 2:
            continue
        t = rec.transcript
        for kind in ("spearman", "kendall"):
            per_utt = upper_bound(gt, Segmentation.per_utterance(t), kind)
            mono = upper_bound(gt, Segmentation.monolithic(t), kind)
            ident = upper_bound(gt, rec.segmentation, kind)
            if per_utt.value != 1.0 or ident.value != 1.0 or mono.value != 0.0 or not mono.degenerate:
                endpoint_failures.append((i, kind))

    violated = []
    for c in range(100):
        rec = make_meeting(rng, f"chain{c}")
        gt = rec.scored_gt()
        values = [upper_bound(gt, p, "spearman").value for p in _refinement_chain(rng, rec.transcript)]
        drops = [(a, b) for a, b in zip(values, values[1:]) if b < a - 1e-12]
        if drops:
            violated.append((c, drops[0]))

    ok = not endpoint_failures and not violated
    acceptance(3, ok, f"endpoint failures {len(endpoint_failures)}; "
                      f"non-monotone refinement chains {len(violated)}/100"
                      + (f" (first: chain {violated[0][0]}, {violated[0][1][0]:.4f} -> "
                         f"{violated[0][1][1]:.4f})" if violated else ""))
    assert not endpoint_failures
    assert not violated, f"{len(violated)} of 100 refinement chains decrease somewhere"


def _spans(bounds, n):
    starts = [0] + [g + 1 for g in sorted(bounds)]
    return list(zip(starts, [s - 1 for s in starts[1:]] + [n - 1]))


def _labels(spans, n):
    out = np.empty(n, int)
    for j, (a, b) in enumerate(spans):
        out[a:b + 1] = j
    return out


def test_criterion_4_metric_oracles(acceptance):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = {"pk": 0.0, "wd": 0.0, "spearman": 0.0, "kendall": 0.0, "icc": 0.0, "match": 0}
    for _ in range(200):
        n = int(rng.integers(3, 13))
        k = int(rng.integers(2, n)) if n > 2 else 2
        ref = _spans({g for g in range(n - 1) if rng.random() < 0.3}, n)
        hyp = _spans({g for g in range(n - 1) if rng.random() < 0.3}, n)
        cfg = SegMetricConfig(k)
        worst["pk"] = max(worst["pk"], abs(pk(_labels(ref, n), _labels(hyp, n), cfg)
                                           - oracles.pk(ref, hyp, n, k)))
        worst["wd"] = max(worst["wd"], abs(window_diff(_labels(ref, n), _labels(hyp, n), cfg)
                                           - oracles.window_diff(ref, hyp, n, k)))

        m = int(rng.integers(2, 13))
        x = rng.integers(1, 6, m).astype(float)
        y = np.round(rng.uniform(1, 5, m), 1)
        worst["spearman"] = max(worst["spearman"], abs(spearman(x, y).value - oracles.spearman(x, y)))
        worst["kendall"] = max(worst["kendall"], abs(kendall(x, y).value - oracles.kendall_tau_b(x, y)))

        while True:
            mat = rng.integers(1, 6, (int(rng.integers(2, 13)), int(rng.integers(2, 5))))
            res = icc_2k(mat)
            if not res.degenerate:
                break
        worst["icc"] = max(worst["icc"], abs(res.value - oracles.icc_2k(mat.tolist())))

        labels = {int(v) for v in rng.choice(np.arange(1, 10), int(rng.integers(0, 4)), replace=False)}
        slots = [{int(v) for v in rng.choice(np.arange(1, 10), int(rng.integers(1, 5)), replace=False)}
                 for _ in range(int(rng.integers(0, 4)))]
        gt = ObjectiveGroundTruth(tuple(ObjectiveSlot(f"s{i}", frozenset(s)) for i, s in enumerate(slots)))
        worst["match"] = max(worst["match"],
                             abs(match_objectives(labels, gt).tp - oracles.max_matching(labels, slots)))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-9 and elapsed < 30
    acceptance(4, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.2f}s")
    assert ok


def test_criterion_5_icc_sanity(acceptance):
    perfect = icc_2k(AnnotationMatrix([[v] * 3 for v in (1, 2, 4, 5, 3, 2)])).value
    rng = np.random.default_rng(5)
    base = rng.integers(1, 6, (12, 1)) + rng.integers(-1, 2, (12, 3))
    m = np.clip(base, 1, 5).astype(float)
    before = icc_2k(m).value
    shifted = m.copy()
    shifted[:, 0] += 1
    after = icc_2k(shifted).value
    ok = perfect == 1.0 and after < before
    acceptance(5, ok, f"perfect {perfect!r}; shift {before:.4f} -> {after:.4f}")
    assert ok


def test_criterion_6_end_to_end_oracle_run(acceptance, tmp_path):
    t0 = time.perf_counter()
    data = make_dataset(5, seed=6)
    cfg = RunConfig(seed=6)
    echo = [run_evaluation(data, cfg, MockBackend.from_dataset(data, "echo_gt", seed=6)) for _ in range(2)]
    const = [run_evaluation(data, cfg, MockBackend("constant", constant=3.0, seed=6)) for _ in range(2)]
    paths = []
    for i, rep in enumerate(echo + const):
        paths.append(rep.write(tmp_path / str(i)))

    def stable(path):
        d = json.loads(path.read_text())
        del d["metadata"]["started_at"], d["metadata"]["finished_at"]
        return json.dumps(d, sort_keys=True)

    identical = all(paths[a][1].read_bytes() == paths[b][1].read_bytes()
                    and stable(paths[a][0]) == stable(paths[b][0]) for a, b in ((0, 1), (2, 3)))
    elapsed = time.perf_counter() - t0
    e, c = echo[0], const[0]
    ok = (e.spearman.value == 1.0 and e.kendall.value == 1.0
          and c.spearman.value == 0.0 and c.kendall.value == 0.0
          and c.spearman.degenerate and c.kendall.degenerate and identical and elapsed < 10)
    acceptance(6, ok, f"echo {e.spearman.value}/{e.kendall.value}, constant {c.spearman.value}"
                      f"/{c.kendall.value} degenerate={c.spearman.degenerate}, "
                      f"repeat identical={identical}, {elapsed:.2f}s")
    assert ok


def _fuzz_response(rng, n):
    """A valid partition with independent gap / overlap violations and maybe a short tail."""
    spans = [list(s) for s in random_spans(rng, n, int(rng.integers(1, min(n, 12) + 1)))]
    injected = 0
    for j in range(len(spans) - 1):
        prev, nxt = spans[j], spans[j + 1]
        room = prev[1] - prev[0]        # how far into the previous segment we may reach
        u = rng.random()
        if u < 0.3 and room > 0:
            prev[1] -= int(rng.integers(1, room + 1))
            injected += 1
        elif u < 0.6 and room > 0:
            nxt[0] -= int(rng.integers(1, room + 1))
            injected += 1
    last = spans[-1]
    if rng.random() < 0.3 and last[1] > last[0]:
        last[1] -= int(rng.integers(1, last[1] - last[0] + 1))
        injected += 1
    body = [{"start_id": a, "end_id": b, "topic": f"t{i}"} for i, (a, b) in enumerate(spans)]
    return json.dumps(body), injected


def test_criterion_7_segmentation_repair_totality(acceptance):
    rng = np.random.default_rng(7)
    bad_count, invalid = [], 0
    injected_total = 0
    for i in range(1000):
        t = make_transcript(rng, f"fuzz{i}", n_utterances=int(rng.integers(2, 40)))
        text, injected = _fuzz_response(rng, len(t))
        injected_total += injected
        try:
            seg = generate_segmentation(ScriptedBackend({"*": text}), t)
        except Exception:
            invalid += 1
            continue
        covered = [u for a, b in seg.spans for u in range(a, b + 1)]
        if covered != list(range(len(t))) or abs(sum(s.duration for s in seg.segments) - t.total_span) > 1e-9:
            invalid += 1
        if len(seg.repairs) != injected:
            bad_count.append((i, injected, len(seg.repairs)))
    ok = invalid == 0 and not bad_count
    acceptance(7, ok, f"1000 responses, {injected_total} injected violations, "
                      f"invalid {invalid}, count mismatches {len(bad_count)}")
    assert ok


def test_criterion_8_bound_relationship(acceptance):
    # noise scale fixed at 1.0; see the project notes for why the relation is not a theorem
    violations = []
    for seed in range(50):
        data = make_dataset(5, seed=seed)
        backend = MockBackend.from_dataset(data, "seeded_noise", sigma=1.0, seed=seed,
                                           segmentation="perturbed")
        rep = run_evaluation(data, RunConfig("pred_segmentation", "none", seed=seed), backend)
        for kind in ("spearman", "kendall"):
            ub = rep.upper_bound[kind]
            measured = getattr(rep, kind)
            if not ub.degenerate and measured.value > ub.value + 1e-9:
                violations.append((seed, kind, measured.value, ub.value))
    ok = not violations
    acceptance(8, ok, f"50 runs, sigma=1.0, violations {len(violations)}")
    assert ok


@pytest.mark.skipif(not os.environ.get(AMI_ENV), reason=f"{AMI_ENV} not set")
def test_criterion_9_reference_dataset_numbers(acceptance):
    records = load_dataset(os.environ[AMI_ENV])
    n_segments = sum(len(r.segmentation) for r in records)

    def group_icc(g):
        rows = [row for r in records if r.annotator_group == g for row in r.annotations.ratings]
        return icc_2k(rows).value

    icc1, icc2 = group_icc("1"), group_icc("2")
    pks, wds = [], []
    for r in records:
        absent = Segmentation.monolithic(r.transcript)
        pks.append(pk(r.segmentation, absent))
        wds.append(window_diff(r.segmentation, absent))
    tp = fp = 0
    for r in records:
        if r.reference_boundaries is None:
            continue
        c = confusion_from_boundaries(r.reference_boundaries, r.segmentation.boundaries,
                                      r.segmentation.n_utterances)
        tp, fp = tp + c.tp, fp + c.fp
    checks = {
        "meetings": len(records) == 130,
        "segments": n_segments == 2459,
        "icc group 1": abs(icc1 - 0.8769) <= 1e-4,
        "icc group 2": abs(icc2 - 0.8202) <= 1e-4,
        "absence pk": abs(np.mean(pks) - 0.4176) <= 5e-4,
        "absence wd": abs(np.mean(wds) - 0.4176) <= 5e-4,
        "boundary tp": tp == 1668,
        "boundary fp": fp == 661,
    }
    ok = all(checks.values())
    acceptance(9, ok, f"{len(records)} meetings, {n_segments} segments, icc {icc1:.4f}/{icc2:.4f}, "
                      f"pk {np.mean(pks):.4f}, wd {np.mean(wds):.4f}, tp {tp}, fp {fp}")
    assert ok, {k: v for k, v in checks.items() if not v}


def test_criterion_9_reports_skip(acceptance):
    if os.environ.get(AMI_ENV):
        return
    acceptance(9, "SKIP", f"set {AMI_ENV} to a converted dataset file to run")
