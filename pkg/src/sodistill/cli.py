"""Command-line entry point: ``sodistill <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .core import read_manifest, write_manifest


def _on_off(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return v == "on"


def _csv_list(v: str) -> list[str]:
    return [s for s in v.split(",") if s]


def _base(manifest) -> Path:
    return Path(manifest).resolve().parent


def _config(args):
    from .harness.config import TOY_CONFIG, TrainConfig, read_config

    base = TOY_CONFIG if args.toy else TrainConfig()
    cfg = read_config(args.config, base) if args.config else base
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_pseudolabel(args) -> int:
    from .labelgen import MockGrounder, MockSegmenter, run_pipeline
    from .phrasekit import MockCaptioner, read_phrase_file

    records = read_manifest(args.manifest)
    base = _base(args.manifest)
    phrases = read_phrase_file(args.phrases) if args.phrases else None
    if args.backend == "mock":
        captions = Path(args.captions) if args.captions else base / "captions.json"
        captioner = MockCaptioner.from_file(captions) if phrases is None else None
        grounder, segmenter = MockGrounder(), MockSegmenter()
    else:
        from .backends import real_backends

        captioner, grounder, segmenter = real_backends(local_files_only=not args.download)
    report = run_pipeline(records, captioner, grounder, segmenter, args.out, tau=args.tau,
                          adjectives=args.adjectives, phrases=phrases, base=base, workers=args.workers)
    n = len(report.results)
    if n and all(r.n_boxes == 0 for r in report.results if r.status != "error"):
        print(f"note: no box reached tau={args.tau}; mock grounder logits are area fractions, try --tau 0",
              file=sys.stderr)
    print(f"{n} images: {n - report.n_failed} labelled, {len(report.empties)} empty, "
          f"{len(report.errors)} errors, {len(report.segmentation_failures)} with segmentation failures")
    return report.exit_code


def cmd_stats(args) -> int:
    from .datasetkit import category_stats, emit_distribution_report

    stats = category_stats(read_manifest(args.manifest))
    path = emit_distribution_report(stats, args.out, plots=not args.no_plots)
    print(f"{stats.n_images} images, {stats.n_parents} categories, {stats.n_subs} subcategories -> {path}")
    return 0


def cmd_split(args) -> int:
    from .datasetkit import split_manifest

    train, test = split_manifest(read_manifest(args.manifest), args.ratio, args.seed)
    stem = Path(args.manifest).with_suffix("")
    train_p = Path(args.train_out) if args.train_out else stem.with_name(stem.name + ".train.jsonl")
    test_p = Path(args.test_out) if args.test_out else stem.with_name(stem.name + ".test.jsonl")
    write_manifest(train, train_p)
    write_manifest(test, test_p)
    print(f"train {len(train)} -> {train_p}\ntest {len(test)} -> {test_p}")
    return 0


def cmd_eval(args) -> int:
    from .evalkit import evaluate_dataset, write_eval_outputs

    preds, gts = _csv_list(args.pred), _csv_list(args.gt)
    names = _csv_list(args.dataset) if args.dataset else [None] * len(gts)
    if not (len(preds) == len(gts) == len(names)):
        raise ValueError("--pred, --gt and --dataset must list the same number of entries")
    reports, curves = [], []
    for p, g, name in zip(preds, gts, names):
        r, c = evaluate_dataset(p, g, name)
        reports.append(r)
        curves.append(c)
        print(f"{r.dataset}: S={r.S:.4f} meanF={r.meanF:.4f} maxF={r.maxF:.4f} E={r.E:.4f} MAE={r.MAE:.4f}")
    write_eval_outputs(reports, curves, args.out, run=args.run)
    return 0


def cmd_train(args) -> int:
    from .harness.training import train

    cfg = _config(args)
    records = [r for r in read_manifest(args.manifest) if args.split is None or r.split == args.split]
    res = train(cfg, records, args.labels, args.out, edge_decoder=args.edge_decoder, base=_base(args.manifest))
    losses = res.losses()
    print(f"{len(losses)} iterations, loss {losses[0]:.4f} -> {losses[-1]:.4f}; checkpoint {res.checkpoint}")
    return 0


def cmd_predict(args) -> int:
    from .harness.training import predict

    if args.manifest:
        records = [r for r in read_manifest(args.manifest) if args.split is None or r.split == args.split]
        written = predict(args.ckpt, records, args.out, args.input_size, base=_base(args.manifest))
    else:
        written = predict(args.ckpt, args.images, args.out, args.input_size)
    print(f"wrote {len(written)} saliency maps to {args.out}")
    return 0


def cmd_report(args) -> int:
    from .harness.report import build_report

    table = build_report(_csv_list(args.inputs), args.out)
    print(table.format(), end="")
    return 0


def cmd_ablation(args) -> int:
    from .harness.ablation import ablation

    cfg = _config(args)
    base = _base(args.manifest)
    records = read_manifest(args.manifest)
    train_recs = [r for r in records if r.split == "train"]
    test_recs = read_manifest(args.test) if args.test else [r for r in records if r.split == "test"]
    alt = [r for r in read_manifest(args.alt_manifest) if r.split == "train"] if args.alt_manifest else None
    gt = args.gt or base / "gt"
    res = ablation(args.preset, cfg, args.out, train_recs, args.labels, test_recs, gt,
                   alt_label_dir=args.alt_labels, alt_manifest=alt, base=base)
    print(res.format(), end="")
    return 0


def cmd_finetune_export(args) -> int:
    from .phrasekit import export_finetune_set

    pairs = export_finetune_set(read_manifest(args.manifest), args.phrases, args.fraction, args.out, args.seed)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def cmd_synth(args) -> int:
    from .synthetic import generate_shapes_dataset, write_disambiguation_fixture

    if args.disambiguation:
        write_disambiguation_fixture(args.out, args.size)
    else:
        generate_shapes_dataset(args.out, n=args.n, size=args.size, seed=args.seed)
    print(f"wrote fixture to {args.out}")
    return 0


def _train_opts(p):
    p.add_argument("--config", help="flat key=value file of TrainConfig fields")
    p.add_argument("--toy", action="store_true", help="start from the small-scale preset instead of the full recipe")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sodistill", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pseudolabel", help="generate pseudo-labels via caption -> box -> mask")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.35)
    p.add_argument("--adjectives", type=_on_off, default=True)
    p.add_argument("--backend", choices=("mock", "real"), default="mock")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--captions", help="mock captioner table (default: captions.json beside the manifest)")
    p.add_argument("--phrases", help="phrase file to use instead of the captioner")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--download", action="store_true", help="allow real backends to fetch weights")
    p.set_defaults(fn=cmd_pseudolabel)

    p = sub.add_parser("stats", help="category statistics and distribution plots")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("split", help="seeded train/test partition of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train-out")
    p.add_argument("--test-out")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("eval", help="S, F, E and MAE of saliency maps against ground truth")
    p.add_argument("--pred", required=True, help="prediction dir (comma-separated for several datasets)")
    p.add_argument("--gt", required=True, help="ground-truth dir (comma-separated, aligned with --pred)")
    p.add_argument("--dataset", help="dataset names (default: ground-truth dir names)")
    p.add_argument("--run", help="run name (default: output file stem)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("train", help="train the saliency network on pseudo-labels")
    _train_opts(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--edge-decoder", type=_on_off, default=True)
    p.add_argument("--split", default="train", help="manifest split to train on (empty string: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="saliency maps from a checkpoint")
    p.add_argument("--ckpt", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--images")
    src.add_argument("--manifest")
    p.add_argument("--split", help="with --manifest, only records of this split")
    p.add_argument("--input-size", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("report", help="comparison table and PR plots from eval outputs")
    p.add_argument("--in", dest="inputs", required=True, help="comma-separated eval report JSON files")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("ablation", help="two-arm ablation with a shared seed")
    _train_opts(p)
    p.add_argument("--preset", required=True)
    p.add_argument("--manifest", required=True, help="train records (split=train) and, by default, test records")
    p.add_argument("--labels", required=True)
    p.add_argument("--test", help="manifest of held-out records")
    p.add_argument("--gt", help="ground-truth dir for the test records (default: gt/ beside the manifest)")
    p.add_argument("--alt-labels")
    p.add_argument("--alt-manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablation)

    p = sub.add_parser("finetune-export", help="seeded (path, prompt) sample for captioner fine-tuning")
    p.add_argument("--manifest", required=True)
    p.add_argument("--phrases", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_finetune_export)

    p = sub.add_parser("synth", help="write the synthetic shapes fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--disambiguation", action="store_true")
    p.set_defaults(fn=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "split", None) == "":
        args.split = None
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
