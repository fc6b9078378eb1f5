"""Command line front-end.

Every subcommand reads and writes plain files.  Failures print one JSON
error record on stderr and exit with 2 (bad input), 3 (model problem) or
4 (anything else); files the failed command had started are removed.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys

import numpy as np

from ..calibration import PlattParams
from ..evaluation import build_report, ground_truth_reason_scores, report_summary_csv, run_ablation
from ..evidence import CategoryVocab
from ..exceptions import AtypiaError, InputError, MissingModel, ParseError
from ..reasoning import rank_by_reason
from ..surprise import REASONS, VARIANTS
from ..taxonomy import LINKAGES, REASON_NAMES, AnnotationMatrix, cut_k, group_reasons, linkage_tree
from .config import EngineConfig
from .engine import SCORE_FIELDS, Engine
from .io import atomic_write, evidence_to_record, read_evidence, read_jsonl, write_json, write_jsonl
from .persistence import load_model, save_model
from .synthetic import SyntheticSpec, synth_generate

log = logging.getLogger("atypia")


class FileInputError(InputError):
    pass


class _Outputs:
    """Track files written by a command so a failure can remove them all."""

    def __init__(self):
        self.paths = []

    def add(self, path):
        self.paths.append(path)
        return path

    def discard(self):
        for p in self.paths:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(p)


def _config(args):
    base = EngineConfig.from_file(args.config) if getattr(args, "config", None) else EngineConfig()
    return base.replace(
        seed=getattr(args, "seed", None),
        grid_size=getattr(args, "grid", None),
        decision_threshold=getattr(args, "threshold", None),
        ablation=getattr(args, "ablation", None),
    )


def _open_model(args):
    path = args.model
    if not path or not os.path.exists(path):
        raise MissingModel(f"model file {path!r} does not exist; run `atypia train` first")
    return load_model(path)


def _need(path):
    if not os.path.exists(path):
        raise FileInputError(f"input file {path!r} does not exist")
    return path


def _read_json(path):
    try:
        with open(_need(path), encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, "document", exc.msg) from None


def cmd_synth(args, out):
    config = _config(args)
    spec = SyntheticSpec.from_dict(_read_json(args.spec)) if args.spec else SyntheticSpec()
    ds = synth_generate(spec, config.seed)
    os.makedirs(args.out, exist_ok=True)
    join = lambda name: out.add(os.path.join(args.out, name))  # noqa: E731
    write_json(join("spec.json"), spec.to_dict())
    write_json(join("vocab.json"), ds.vocab.to_dict())
    write_jsonl(join("train.jsonl"), [evidence_to_record(r) for r in ds.train])
    write_jsonl(join("test.jsonl"), [evidence_to_record(r) for r in ds.test])
    write_jsonl(join("labels.jsonl"), ds.labels)
    if ds.annotations is not None:
        with atomic_write(join("annotations.csv")) as fh:
            fh.write(ds.annotations.to_csv())
    log.info("synthetic data written to %s", args.out)


def cmd_train(args, out):
    config = _config(args)
    vocab = CategoryVocab.from_dict(_read_json(args.vocab)) if args.vocab else None
    calibration = _read_json(args.calibration) if args.calibration else None
    records = read_evidence(_need(args.train), vocab, calibration)
    unlabeled = [r.image_id for r in records if not r.is_labeled]
    if unlabeled:
        raise InputError(f"training records without labels: {unlabeled[:5]}")
    prior = read_evidence(_need(args.prior_records), vocab, calibration) if args.prior_records else None
    engine = Engine.train(records, vocab, config, prior)
    cal = None
    if calibration:
        cal = {k: [PlattParams.from_dict(p) for p in v] for k, v in calibration.items()}
    save_model(out.add(args.model), engine, cal)
    log.info("model trained on %d records", len(records))


def cmd_score(args, out):
    engine, calibration = _open_model(args)
    evidence = read_evidence(_need(args.input), engine.typicality.vocab_, calibration)
    ablation = args.ablation or engine.config.ablation
    write_jsonl(out.add(args.out), engine.score_records(evidence, ablation))


def _score_rows(path):
    rows = read_jsonl(_need(path))
    for i, row in enumerate(rows, start=1):
        for key in ("image_id", *SCORE_FIELDS):
            if key not in row:
                raise ParseError(i, key, "missing")
    return rows


def cmd_reason(args, out):
    engine, _ = _open_model(args)
    if args.threshold is not None:
        engine.reasoning.set_params(threshold=args.threshold)
    write_jsonl(out.add(args.out), engine.reason_records(_score_rows(args.input)))


def cmd_rank(args, out):
    rows = read_jsonl(_need(args.input))
    for i, row in enumerate(rows, start=1):
        if "normalized" not in row or "image_id" not in row:
            raise ParseError(i, "normalized", "missing; rank reads the output of `atypia reason`")
    ordered = rank_by_reason(rows, args.reason, key=lambda row: [row["normalized"][r] for r in REASONS])
    ranked = [{"rank": k + 1, "image_id": row["image_id"], "score": row["normalized"][args.reason]}
              for k, row in enumerate(ordered)]
    if args.out:
        write_jsonl(out.add(args.out), ranked)
    else:
        for row in ranked:
            sys.stdout.write(json.dumps(row) + "\n")


def _annotations(path):
    with open(_need(path), encoding="utf-8") as fh:
        return AnnotationMatrix.from_csv(fh.read())


def cmd_taxonomy(args, out):
    ann = _annotations(args.input)
    tree = linkage_tree(ann.values, args.linkage)
    clusters = cut_k(tree, args.k)
    groups = group_reasons(ann.values, clusters)
    doc = {
        "linkage": args.linkage,
        "k": args.k,
        "dendrogram": tree.to_dict(),
        "image_clusters": {iid: int(c) for iid, c in zip(ann.image_ids, clusters)},
        "reason_groups": {name: int(g) for name, g in zip(ann.reason_names, groups)},
    }
    write_json(out.add(args.out), doc)
    if args.tree:
        with atomic_write(out.add(args.tree)) as fh:
            fh.write(tree.render_text(ann.image_ids) + "\n")


def cmd_eval(args, out):
    reasons = {row["image_id"]: row for row in read_jsonl(_need(args.input))}
    labels = read_jsonl(_need(args.labels))
    missing = [lab["image_id"] for lab in labels if lab["image_id"] not in reasons]
    if missing:
        raise InputError(f"no reason record for labeled images {missing[:5]}")
    ids = [lab["image_id"] for lab in labels]
    normalized = np.array([[reasons[i]["normalized"][r] for r in REASONS] for i in ids]).reshape(-1, 3)
    abnormal = np.array([int(lab["abnormal"]) for lab in labels])
    true_reasons = [lab.get("reason") for lab in labels]
    gt = None
    if args.annotations:
        ann = _annotations(args.annotations)
        if list(ann.reason_names) != list(REASON_NAMES):
            raise InputError("annotation columns must be the 21 reasons in canonical order")
        by_id = dict(zip(ann.image_ids, ann.values))
        gt = np.array([ground_truth_reason_scores(by_id[i]) if i in by_id else np.full(3, np.nan)
                       for i in ids])
    threshold = args.threshold if args.threshold is not None else 0.95
    report = build_report(normalized, abnormal, true_reasons, gt, threshold)
    if args.evidence:
        engine, calibration = _open_model(args)
        evidence = read_evidence(_need(args.evidence), engine.typicality.vocab_, calibration)
        by_ev = {ev.image_id: ev for ev in evidence}
        report["ablation_auc"] = run_ablation([by_ev[i] for i in ids], true_reasons, engine.typicality,
                                              tuple(VARIANTS), engine.config.clamp_max)
    write_json(out.add(args.out), report)
    if args.summary:
        with atomic_write(out.add(args.summary)) as fh:
            fh.write(report_summary_csv(report))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="64-bit seed for stochastic steps")
    common.add_argument("--grid", type=int, help="location grid cells per side")
    common.add_argument("--threshold", type=float, help="abnormality decision threshold")
    common.add_argument("--ablation", choices=sorted(VARIANTS), help="score variant")

    parser = argparse.ArgumentParser(prog="atypia", description="Abnormal image detection and explanation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic population")
    p.add_argument("--spec", help="JSON synthetic specification")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="learn a model from labeled normal records")
    p.add_argument("--train", required=True, help="JSONL training records")
    p.add_argument("--model", required=True, help="model document to write")
    p.add_argument("--vocab", help="JSON category vocabulary")
    p.add_argument("--prior-records", help="JSONL normal evidence for fitting the priors")
    p.add_argument("--calibration", help="JSON Platt parameters for raw attribute scores")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common], help="raw surprise scores per image")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="JSONL evidence")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("reason", parents=[common], help="normalized scores, decision and reason")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="JSONL score records")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reason)

    p = sub.add_parser("rank", parents=[common], help="order images by one reason")
    p.add_argument("--input", required=True, help="JSONL reason records")
    p.add_argument("--reason", required=True, choices=REASONS)
    p.add_argument("--out", help="JSONL output (default: stdout)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("taxonomy", parents=[common], help="cluster an annotation table")
    p.add_argument("--input", required=True, help="CSV of per-image reason responses")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--linkage", choices=LINKAGES, default="ward")
    p.add_argument("--out", required=True)
    p.add_argument("--tree", help="optional text rendering of the dendrogram")
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("eval", parents=[common], help="evaluation report")
    p.add_argument("--input", required=True, help="JSONL reason records")
    p.add_argument("--labels", required=True, help="JSONL ground-truth labels")
    p.add_argument("--annotations", help="CSV of human reason responses")
    p.add_argument("--evidence", help="JSONL evidence; adds the ablation table (needs --model)")
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="optional metric,value CSV")
    p.set_defaults(func=cmd_eval)
    return parser


def _setup_logging():
    level = os.environ.get("ATYPIA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    out = _Outputs()
    try:
        args.func(args, out)
    except BrokenPipeError:
        # downstream reader closed early, as `atypia rank ... | head` does
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 0
    except AtypiaError as exc:
        out.discard()
        sys.stderr.write(json.dumps(exc.to_record()) + "\n")
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        out.discard()
        log.debug("internal error", exc_info=True)
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
