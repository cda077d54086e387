"""Command-line entry point: ``meetingeff {validate,run,metrics,compare}``.

Exit codes: 0 success, 1 validation or configuration error, 2 backend
failure (partial results are written before exiting).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import metrics
from .corpus import AnnotationMatrix, DatasetError, ObjectiveSet, load_dataset, validate_dataset
from .judge.backends import BackendError, MockBackend, RemoteBackend
from .judge.core import CapabilityError, SamplingPolicy
from .pipeline import (IncompleteRunError, MetaEvalReport, RunConfig, consistency_report,
                       run_evaluation)

EXIT_OK, EXIT_INVALID, EXIT_BACKEND = 0, 1, 2

MODE_FLAGS = {"gt-inputs": "gt_inputs", "pred-seg": "pred_segmentation",
              "external": "external_transcripts"}
POOLING_FLAGS = {"global": "global", "per-meeting": "per_meeting_mean"}
SCORING_FLAGS = {"dist": "distribution_weighted", "samples": "sample_mean"}
OBJECTIVE_FLAGS = {"gt": "gt", "pred": "predicted", "none": "none"}


def cmd_validate(args) -> int:
    try:
        results = validate_dataset(args.dataset)
    except (OSError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    bad = [(mid, err) for mid, err in results if err]
    for mid, err in bad:
        print(f"FAIL {mid}: {err}")
    print(f"{len(results) - len(bad)}/{len(results)} ok")
    return EXIT_INVALID if bad else EXIT_OK


def make_backend(args, records):
    choice = args.backend
    seg = args.mock_segmentation.replace("-", "_")
    if choice == "remote":
        if not args.endpoint:
            raise ValueError("--backend remote needs --endpoint")
        return RemoteBackend(args.endpoint, args.model or "", timeout=args.timeout,
                             max_inflight=args.max_inflight, distribution=args.scoring == "dist",
                             params={"temperature": args.temperature} if args.temperature is not None else None)
    if choice == "mock:echo-gt":
        return MockBackend.from_dataset(records, "echo_gt", seed=args.seed, segmentation=seg)
    if choice.startswith("mock:constant="):
        return MockBackend.from_dataset(records, "constant", constant=float(choice.split("=", 1)[1]),
                                        seed=args.seed, segmentation=seg)
    if choice.startswith("mock:noise="):
        return MockBackend.from_dataset(records, "seeded_noise", sigma=float(choice.split("=", 1)[1]),
                                        seed=args.seed, segmentation=seg)
    raise ValueError(f"unknown backend {choice!r}")


def cmd_run(args) -> int:
    try:
        records = load_dataset(args.dataset)
        config = RunConfig(
            mode=MODE_FLAGS[args.mode],
            objectives_condition=OBJECTIVE_FLAGS[args.objectives],
            window=args.window,
            policy=SamplingPolicy(SCORING_FLAGS[args.scoring], args.samples, args.seed),
            correlation_pooling=POOLING_FLAGS[args.pooling],
            seed=args.seed,
            max_inflight=args.max_inflight,
            decoding={"temperature": args.temperature} if args.temperature is not None else {},
        )
        backend = make_backend(args, records)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out)
    try:
        report = run_evaluation(records, config, backend, store=out / "results.jsonl")
    except IncompleteRunError as exc:
        paths = exc.report.write(out)
        print(f"run incomplete: {len(exc.report.failures)} failure(s); partial results in",
              *paths, file=sys.stderr)
        return EXIT_BACKEND
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ValueError, CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for p in report.write(out):
        print(p)
    _print_summary(report)
    return EXIT_OK


def _fmt(res):
    if res is None:
        return "n/a"
    return f"{res.value:.4f}" + (" (degenerate)" if res.degenerate else "")


def _print_summary(report):
    print(f"spearman {_fmt(report.spearman)}")
    print(f"kendall {_fmt(report.kendall)}")
    if report.upper_bound:
        print(f"upper_bound spearman {_fmt(report.upper_bound['spearman'])}")
        print(f"upper_bound kendall {_fmt(report.upper_bound['kendall'])}")
    if report.segmentation_metrics:
        print(f"pk {report.segmentation_metrics['pk']:.4f}")
        print(f"wd {report.segmentation_metrics['wd']:.4f}")
    if report.objective_metrics:
        print(f"hamming_loss {report.objective_metrics.hamming_loss:.4f}")
        print(f"micro_f1 {report.objective_metrics.micro_f1:.4f}")


def _metrics_seg(args):
    ref = {r.meeting_id: r for r in load_dataset(args.ref)}
    hyp = {r.meeting_id: r for r in load_dataset(args.hyp)}
    cfg = metrics.SegMetricConfig("auto" if args.window == "auto" else int(args.window))
    pks, wds = [], []
    for mid, r in ref.items():
        if mid not in hyp:
            raise ValueError(f"meeting {mid} missing from hypothesis file")
        if r.segmentation is None or hyp[mid].segmentation is None:
            raise ValueError(f"meeting {mid} lacks segments")
        pks.append(metrics.pk(r.segmentation, hyp[mid].segmentation, cfg))
        wds.append(metrics.window_diff(r.segmentation, hyp[mid].segmentation, cfg))
    print(f"pk {sum(pks) / len(pks)!r}")
    print(f"wd {sum(wds) / len(wds)!r}")


def _metrics_corr(args):
    with open(args.file, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    x = [float(r[args.x]) for r in rows if r[args.x] != "" and r[args.y] != ""]
    y = [float(r[args.y]) for r in rows if r[args.x] != "" and r[args.y] != ""]
    for kind in (("spearman", "kendall") if args.kind == "both" else (args.kind,)):
        res = metrics.correlate(x, y, kind)
        print(f"{kind} {res.value!r}" + (" degenerate" if res.degenerate else ""))


def _metrics_icc(args):
    data = json.loads(Path(args.file).read_text(encoding="utf-8"))
    if "meetings" in data:
        rows = []
        for r in load_dataset(args.file):
            if r.annotations is not None and (args.group is None or r.annotator_group == args.group):
                rows.extend(r.annotations.ratings)
        if not rows:
            raise ValueError("no annotations selected")
        mat = AnnotationMatrix(rows)
    else:
        mat = AnnotationMatrix(data["scores"], tuple(data.get("raters") or ()))
    res = metrics.icc_2k(mat)
    print(f"icc_2k {res.value!r}" + (" degenerate" if res.degenerate else ""))


def _metrics_obj(args):
    records = {r.meeting_id: r for r in load_dataset(args.dataset)}
    preds = json.loads(Path(args.pred).read_text(encoding="utf-8"))
    results = []
    for mid, labels in sorted(preds.items()):
        if mid not in records or records[mid].objective_gt is None:
            raise ValueError(f"meeting {mid} has no objective ground truth")
        results.append(metrics.match_objectives(ObjectiveSet(frozenset(labels), args.cap),
                                                records[mid].objective_gt))
    res = metrics.objective_metrics(results)
    print(f"hamming_loss {res.hamming_loss!r}")
    print(f"micro_f1 {res.micro_f1!r}" + (" degenerate" if res.degenerate else ""))


def cmd_metrics(args) -> int:
    handler = {"seg": _metrics_seg, "corr": _metrics_corr, "icc": _metrics_icc,
               "obj": _metrics_obj}[args.metric]
    try:
        handler(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        runs = [MetaEvalReport.from_dict(json.loads(Path(p).read_text(encoding="utf-8")))
                for p in args.reports]
        rep = consistency_report(runs, [str(p) for p in args.reports], args.kind)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for i, a in enumerate(rep.names):
        for j, b in enumerate(rep.names):
            if i < j:
                flag = " degenerate" if rep.degenerate[i, j] else ""
                print(f"{args.kind} {a} {b} {float(rep.matrix[i, j])!r}{flag}")
    for name, corr in rep.human.items():
        res = corr[args.kind]
        print(f"human {name} " + ("n/a" if res is None else repr(res.value)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meetingeff", description="Check judge scores of meeting segments against human ratings.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset file")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run an evaluation and write report.json + segments.csv")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), default="gt-inputs")
    p.add_argument("--backend", default="mock:echo-gt",
                   help="mock:echo-gt | mock:constant=C | mock:noise=S | remote")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--temperature", type=float)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--objectives", choices=sorted(OBJECTIVE_FLAGS), default="gt")
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--scoring", choices=sorted(SCORING_FLAGS), default="dist")
    p.add_argument("--pooling", choices=sorted(POOLING_FLAGS), default="global")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-inflight", type=int, default=4)
    p.add_argument("--mock-segmentation", default="perturbed",
                   choices=["gt", "perturbed", "per-utterance", "monolithic", "uniform"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="compute a single metric")
    msub = p.add_subparsers(dest="metric", required=True)
    m = msub.add_parser("seg", help="Pk and WindowDiff between two dataset files")
    m.add_argument("--ref", required=True)
    m.add_argument("--hyp", required=True)
    m.add_argument("--window", default="auto")
    m = msub.add_parser("corr", help="rank correlation between two CSV columns")
    m.add_argument("--x", required=True)
    m.add_argument("--y", required=True)
    m.add_argument("--kind", choices=["spearman", "kendall", "both"], default="both")
    m.add_argument("file")
    m = msub.add_parser("icc", help="ICC(2,k) of an annotation matrix or dataset")
    m.add_argument("--file", required=True)
    m.add_argument("--group")
    m = msub.add_parser("obj", help="Hamming loss and micro-F1 of predicted objectives")
    m.add_argument("--pred", required=True)
    m.add_argument("--dataset", required=True)
    m.add_argument("--cap", type=int, default=3)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="pairwise agreement between saved runs")
    p.add_argument("reports", nargs="+", help="report.json files with identical segment keys")
    p.add_argument("--kind", choices=["spearman", "kendall"], default="spearman")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
