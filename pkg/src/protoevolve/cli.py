"""Command-line entry points wiring the pipeline stages to files on disk."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .anchors import (
    DEFAULT_ALPHA,
    AnchorSelection,
    build_initial_prototypes,
    select_anchors,
)
from .gating import DEFAULT_N_DIV, build_semantic_features, confusion_matrix, gate_top_n
from .inference import classify, descriptor_alignment, evaluate, token_correlation
from .modulation import checkpoint_payload, from_checkpoint, modulate
from .store import (
    NUM_GRADES,
    EmbeddingSet,
    StoreError,
    load_checkpoint,
    load_embedding_set,
    load_prompt_library,
    save_checkpoint,
)
from .synth import SynthConfig, generate, write_dataset
from .training import TrainConfig, train

logger = logging.getLogger(__name__)


def _read_id_list(path: str) -> list[str]:
    ids = [line.strip() for line in Path(path).read_text().splitlines()]
    ids = [i for i in ids if i]
    if not ids:
        raise ValueError(f"id list {path} is empty")
    return ids


def _maybe_subset(eset: EmbeddingSet, ids_path: str | None) -> EmbeddingSet:
    if ids_path is None:
        return eset
    return eset.subset(_read_id_list(ids_path))


def _selection_to_json(selection: AnchorSelection) -> dict:
    return {
        "alpha": selection.alpha,
        "per_grade": {
            str(grade): [{"id": rid, "score": score} for rid, score in entries]
            for grade, entries in selection.per_grade.items()
        },
    }


def _selection_from_json(path: str) -> AnchorSelection:
    doc = json.loads(Path(path).read_text())
    per_grade = {
        int(grade): [(entry["id"], float(entry["score"])) for entry in entries]
        for grade, entries in doc["per_grade"].items()
    }
    return AnchorSelection(alpha=int(doc["alpha"]), per_grade=per_grade)


def _write_json(path: str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def cmd_select_anchors(args) -> int:
    eset = _maybe_subset(load_embedding_set(args.embeddings), args.ids)
    selection = select_anchors(eset, alpha=args.alpha)
    _write_json(args.out, _selection_to_json(selection))
    logger.info("selected %d anchors -> %s", len(selection.all_ids()), args.out)
    return 0


def cmd_gate(args) -> int:
    library = load_prompt_library(args.prompts)
    eset = load_embedding_set(args.anchors)
    if args.selection:
        anchors = [eset.by_id(rid) for rid in _selection_from_json(args.selection).all_ids()]
    else:
        anchors = [rec for rec in eset.labeled() if rec.gating is not None]
    result = gate_top_n(library, anchors, args.n_div)
    _write_json(
        args.out,
        {
            "n_div": args.n_div,
            "selected": result.selected,
            "scores": {fid: result.scores[fid] for fid in sorted(result.scores)},
        },
    )
    logger.info("kept %d of %d families -> %s", result.n_kept, len(result.scores), args.out)
    return 0


def cmd_confusion(args) -> int:
    library = load_prompt_library(args.prompts)
    matrix = confusion_matrix(library)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grade"] + [f"g{c}" for c in range(NUM_GRADES)])
        for c in range(NUM_GRADES):
            writer.writerow([c] + [f"{v:.10f}" for v in matrix[c]])
    logger.info("confusion matrix -> %s", args.out)
    return 0


def cmd_train(args) -> int:
    config = TrainConfig.from_file(args.config)
    eset = load_embedding_set(args.embeddings)
    library = load_prompt_library(args.prompts)
    selection = _selection_from_json(args.anchors)

    train_set = _maybe_subset(eset, args.train_ids)
    val_set = _maybe_subset(eset, args.val_ids) if args.val_ids else train_set

    proto = build_initial_prototypes(selection, eset)
    anchor_records = [eset.by_id(rid) for rid in selection.all_ids()]
    gating = gate_top_n(library, anchor_records, args.n_div)
    feats = build_semantic_features(library, gating)

    report = train(proto, feats, train_set.labeled(), val_set.labeled(), config)
    enhanced, _ = modulate(proto, feats, report.params)
    tensors, dims = checkpoint_payload(report.params, proto, enhanced)
    save_checkpoint(args.out, tensors, dims)
    logger.info(
        "trained %d epochs (best %d, val %.6f -> %.6f) -> %s",
        config.epochs,
        report.best_epoch,
        report.initial_val_loss,
        report.best_val_loss,
        args.out,
    )
    print(
        json.dumps(
            {
                "best_epoch": report.best_epoch,
                "initial_val_loss": report.initial_val_loss,
                "best_val_loss": report.best_val_loss,
            }
        )
    )
    return 0


def _load_model(path: str):
    tensors, dims = load_checkpoint(path)
    return from_checkpoint(tensors, dims)


def cmd_eval(args) -> int:
    eset = _maybe_subset(load_embedding_set(args.embeddings), args.ids)
    _, _, proto_dpe = _load_model(args.checkpoint)
    report = evaluate(eset, proto_dpe)
    payload = report.to_dict()
    payload["records"] = len(eset.records)
    _write_json(args.out, payload)
    logger.info("accuracy %.4f macro-F1 %.4f -> %s", report.accuracy, report.macro_f1, args.out)
    return 0


def cmd_infer(args) -> int:
    eset = _maybe_subset(load_embedding_set(args.embeddings), args.ids)
    _, _, proto_dpe = _load_model(args.checkpoint)
    with open(args.out, "w") as fh:
        for rec in eset.records:
            fh.write(json.dumps(classify(rec, proto_dpe).to_dict()) + "\n")
    logger.info("classified %d records -> %s", len(eset.records), args.out)
    return 0


def cmd_analyze(args) -> int:
    params, proto_base, proto_dpe = _load_model(args.checkpoint)
    if args.what == "correlation":
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            n_s = proto_base.matrices.shape[1]
            writer.writerow(["stage", "grade", "token"] + [f"c{i}" for i in range(n_s)])
            for stage, proto in (("base", proto_base), ("dpe", proto_dpe)):
                corr = token_correlation(proto)
                for grade in range(NUM_GRADES):
                    for row in range(n_s):
                        writer.writerow(
                            [stage, grade, row] + [f"{v:.10f}" for v in corr[grade, row]]
                        )
        logger.info("token correlation -> %s", args.out)
        return 0

    if not args.prompts or not args.embeddings:
        raise ValueError("--what descriptors requires --prompts and --embeddings")
    library = load_prompt_library(args.prompts)
    eset = _maybe_subset(load_embedding_set(args.embeddings), args.ids)
    labels = []
    descriptors = []
    for fam in library.families:
        if fam.kind != "desc":
            continue
        for grade in range(NUM_GRADES):
            labels.append(f"{fam.family_id}:g{grade}")
            descriptors.append(fam.variants[grade])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "predicted_grade"] + labels)
        for rec in eset.records:
            result = descriptor_alignment(rec, descriptors, proto_dpe, params.wp)
            writer.writerow(
                [rec.id, result.grade] + [f"{v:.10f}" for v in result.similarities]
            )
    logger.info("descriptor alignment for %d records -> %s", len(eset.records), args.out)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_file(args.config) if args.config else SynthConfig()
    data = generate(cfg)
    paths = write_dataset(data, args.out, cfg)
    logger.info(
        "wrote %d records, %d families -> %s",
        len(data.embeddings.records),
        len(data.library.families),
        args.out,
    )
    print(json.dumps({name: str(p) for name, p in paths.items()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoevolve",
        description="Prototype evolution pipeline: anchors, gating, modulation training, inference.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select-anchors", help="pick low-variance anchors per grade")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--alpha", type=int, default=DEFAULT_ALPHA)
    p.add_argument("--ids", help="file of record ids to restrict to, one per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select_anchors)

    p = sub.add_parser("gate", help="rank prompt families against anchor gating embeddings")
    p.add_argument("--prompts", required=True)
    p.add_argument("--anchors", required=True, help="embedding manifest holding the anchors")
    p.add_argument("--selection", help="anchor selection JSON to pick records from the manifest")
    p.add_argument("--n-div", type=int, default=DEFAULT_N_DIV)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("confusion", help="pairwise grade confusion of a prompt library")
    p.add_argument("--prompts", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_confusion)

    p = sub.add_parser("train", help="train the modulation projections")
    p.add_argument("--config", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--prompts", required=True)
    p.add_argument("--anchors", required=True, help="anchor selection JSON")
    p.add_argument("--train-ids", help="id list for the training split")
    p.add_argument("--val-ids", help="id list for the validation split")
    p.add_argument("--n-div", type=int, default=DEFAULT_N_DIV)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics of a checkpoint on labeled embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ids")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="classify records, one JSON line each")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ids")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("analyze", help="export analysis matrices as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--what", required=True, choices=["correlation", "descriptors"])
    p.add_argument("--prompts", help="prompt manifest (descriptors mode)")
    p.add_argument("--embeddings", help="embedding manifest (descriptors mode)")
    p.add_argument("--ids")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    p.add_argument("--config", help="key = value file; defaults used when omitted")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (StoreError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
