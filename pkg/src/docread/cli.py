"""Command-line surface: synth, train, eval, extract."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .corpus.store import load_corpus, save_corpus
from .corpus.synth import cue_config, generate_corpus, toy_config
from .evaluate import merge_reports, score
from .model import apply_ablation, desk_scale_config, paper_scale_config
from .pipeline import run_pipeline
from .training import TrainConfig, load_checkpoint, train

ABLATIONS = ("text", "text+vis", "text+ctx", "full")


def _corpus_config(kind: str, n: int):
    if kind == "toy":
        return dataclasses.replace(toy_config(), n=n)
    if kind == "cue":
        return dataclasses.replace(cue_config(), n=n)
    raise ValueError(f"unknown corpus kind {kind!r}")


def cmd_synth(args) -> int:
    cfg = _corpus_config(args.corpus, args.n)
    samples = generate_corpus(cfg, seed=args.seed)
    save_corpus(samples, args.out)
    print(f"wrote {len(samples)} documents to {args.out}")
    return 0


def _load_train_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if args.config:
        import yaml

        with open(args.config) as fh:
            overrides = yaml.safe_load(fh) or {}
        known = {f.name for f in dataclasses.fields(TrainConfig)}
        bad = set(overrides) - known
        if bad:
            raise SystemExit(f"unknown config keys: {sorted(bad)}")
        cfg = dataclasses.replace(cfg, **overrides)
    direct = {}
    if args.epochs is not None:
        direct["epochs"] = args.epochs
    if args.seed is not None:
        direct["seed"] = args.seed
    return dataclasses.replace(cfg, **direct) if direct else cfg


def cmd_train(args) -> int:
    samples = load_corpus(args.data)
    eval_samples = load_corpus(args.eval_data) if args.eval_data else None
    cfg = _load_train_config(args)
    schema = corpus_mod.derive_schema(samples)
    vocab = corpus_mod.Vocabulary.from_transcripts(
        [t for s in samples for t in s.transcripts]
    )
    model_cfg = paper_scale_config() if args.preset == "paper" else desk_scale_config(
        t_max=args.t_max
    )
    if args.ablation:
        model_cfg = apply_ablation(model_cfg, args.ablation)
    if args.frozen_reader:
        model_cfg = dataclasses.replace(model_cfg, end_to_end=False)

    def progress(row):
        bits = [f"epoch {row['epoch']:3d}"]
        for key in ("loss_det", "loss_rcg", "loss_info"):
            bits.append(f"{key.split('_')[1]}={row[key]:.4f}")
        if "f1_avg" in row:
            bits.append(f"F1={row['f1_avg']:.4f}")
        print("  ".join(bits), flush=True)

    result = train(
        samples,
        cfg,
        model_cfg=model_cfg,
        eval_samples=eval_samples,
        out_dir=args.out,
        schema=schema,
        vocab=vocab,
        progress=progress if not args.quiet else None,
    )
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    samples = load_corpus(args.data)
    loaded = load_checkpoint(args.checkpoint)
    model = loaded.model
    if args.gt_boxes:
        from .evaluate import evaluate_model

        stats = evaluate_model(model, samples)
        report = stats["report"]
        extra = {"seq_acc": stats["seq_acc"]}
    else:
        reports = []
        for sample in samples:
            res = model.infer(
                sample.image, score_thresh=args.score_thresh, nms_iou=args.nms_iou
            )
            reports.append(score(res.entities, sample.entity_map(), schema=model.schema))
        report = merge_reports(reports)
        extra = {}
    payload = {**report.as_dict(), **extra}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_extract(args) -> int:
    outcome = run_pipeline(
        args.input,
        args.checkpoint,
        out_dir=args.out,
        overlay=args.overlay,
        score_thresh=args.score_thresh,
        nms_iou=args.nms_iou,
    )
    for record in outcome.records:
        if "error" in record:
            print(f"{record['image']}: ERROR {record['error']}", file=sys.stderr)
        else:
            print(json.dumps(record, sort_keys=True))
    if outcome.n_ok == 0 and outcome.n_failed > 0:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docread",
        description="Detect, read, and extract typed entities from document images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", choices=("toy", "cue"), default="toy")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a saved corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="YAML file overriding training fields")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--t-max", type=int, default=24)
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--frozen-reader", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against a labeled corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--gt-boxes", action="store_true")
    p.add_argument("--score-thresh", type=float, default=0.5)
    p.add_argument("--nms-iou", type=float, default=0.3)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", help="run the full pipeline on images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--overlay", action="store_true")
    p.add_argument("--score-thresh", type=float, default=0.5)
    p.add_argument("--nms-iou", type=float, default=0.3)
    p.set_defaults(func=cmd_extract)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
