"""Batch command-line surface for the full pipeline.

Subcommands: synth, align, fuse, train, infer, nms-fuse, eval, delta.
Each run is deterministic given its inputs and declared seeds.  Config
files are flat JSON; `--dump-config` prints the defaults.  On failure a
single-line machine-readable error record is written to stderr and the
exit code is nonzero; exit code 0 means every output file was fully
written.  TALFUSE_THREADS caps the per-video worker pool.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from . import fusion, pipeline
from .core import ValidationError
from .evaluation import PRESETS, evaluate, per_class_delta
from .io_formats import (
    read_features,
    read_ground_truth,
    read_proposals,
    read_report,
    write_features,
    write_proposals,
    write_report,
)
from .proposal_fusion import pool_and_nms
from .synth import SynthConfig, generate_dataset, read_manifest

SYNTH_CONFIG_DEFAULTS = {**SynthConfig().to_dict(), "n_train": 20, "n_test": 10}
TRAIN_CONFIG_DEFAULTS = pipeline.PipelineSettings().to_dict()


def _load_config(path, defaults: dict) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        user = json.load(fh)
    if not isinstance(user, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    unknown = sorted(set(user) - set(defaults))
    if unknown:
        raise ValidationError(f"{path}: unknown config key(s): {unknown}")
    merged = dict(defaults)
    merged.update(user)
    return merged


def _dump_config(defaults: dict) -> int:
    print(json.dumps(defaults, indent=2, sort_keys=True))
    return 0


def _require(args, *names) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError(f"missing required argument(s): {', '.join(missing)}")


def cmd_synth(args) -> int:
    if args.dump_config:
        return _dump_config(SYNTH_CONFIG_DEFAULTS)
    _require(args, "config", "out")
    cfg_dict = _load_config(args.config, SYNTH_CONFIG_DEFAULTS)
    n_train = cfg_dict.pop("n_train")
    n_test = cfg_dict.pop("n_test")
    cfg = SynthConfig.from_dict(cfg_dict)
    manifest = generate_dataset(cfg, n_train, n_test, args.out)
    print(
        json.dumps(
            {
                "record": "synth",
                "manifest": str(Path(args.out) / "manifest.jsonl"),
                "episodes": len(manifest.episodes),
            }
        )
    )
    return 0


def cmd_align(args) -> int:
    video = read_features(args.video)
    audio = read_features(args.audio)
    pair = pipeline.align_pair(video, audio, args.method)
    trace = {
        "method": pair.trace.method.value,
        "k": pair.trace.k,
        "k_prime": pair.trace.k_prime,
        "L_m": pair.trace.common_length,
        "pooled_length": pair.trace.pooled_length,
    }
    out = Path(args.out)
    write_features(pair.video, out.with_name(out.name + ".video.mmfs"))
    write_features(pair.audio, out.with_name(out.name + ".audio.mmfs"))
    with open(out.with_name(out.name + ".trace.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(trace) + "\n")
    print(json.dumps(trace))
    return 0


def cmd_fuse(args) -> int:
    video = read_features(args.video)
    audio = read_features(args.audio)
    pair = pipeline.align_pair(video, audio, args.align)
    if args.scheme == "concat":
        fused = fusion.concat_fuse(pair)
    else:
        if args.params is not None:
            ckpt = pipeline.load_checkpoint(args.params)
            if ckpt.rmattn is None:
                raise ValidationError(f"{args.params}: checkpoint has no attention parameters")
            params = ckpt.rmattn
        else:
            params = fusion.rmattn_init(d_v=pair.video.dim, d_a=pair.audio.dim, seed=args.seed)
        fused, _ = fusion.rmattn_forward(params, pair)
    write_features(fused, args.out)
    print(json.dumps({"record": "fuse", "scheme": args.scheme, "length": fused.length, "dim": fused.dim}))
    return 0


def cmd_train(args) -> int:
    if args.dump_config:
        return _dump_config(TRAIN_CONFIG_DEFAULTS)
    _require(args, "manifest", "scheme", "config", "out")
    settings = pipeline.PipelineSettings.from_dict(_load_config(args.config, TRAIN_CONFIG_DEFAULTS))
    manifest = read_manifest(args.manifest)
    episodes = pipeline.load_split(manifest, "train")
    ckpt, result = pipeline.train_pipeline(episodes, args.scheme, settings, manifest.num_classes)
    for epoch, loss in enumerate(result.losses):
        print(json.dumps({"record": "epoch", "epoch": epoch, "loss": loss}))
    pipeline.save_checkpoint(ckpt, args.out)
    return 0


def cmd_infer(args) -> int:
    manifest = read_manifest(args.manifest)
    ckpt = pipeline.load_checkpoint(args.ckpt)
    episodes = pipeline.load_split(manifest, "test")
    proposals = pipeline.infer_all(ckpt, episodes)
    write_proposals([proposals[vid] for vid in sorted(proposals)], args.out)
    total = sum(len(ps) for ps in proposals.values())
    print(json.dumps({"record": "infer", "videos": len(proposals), "proposals": total}))
    return 0


def cmd_nms_fuse(args) -> int:
    paths = [p for p in args.inputs.split(",") if p]
    if not paths:
        raise ValidationError("--inputs needs at least one path")
    by_video: dict[str, list] = {}
    for path in paths:
        for pset in read_proposals(path):
            by_video.setdefault(pset.video_id, []).append(pset)
    fused = [
        pool_and_nms(by_video[vid], args.iou, max_out=args.max_out)
        for vid in sorted(by_video)
    ]
    write_proposals(fused, args.out)
    print(json.dumps({"record": "nms-fuse", "videos": len(fused), "proposals": sum(len(f) for f in fused)}))
    return 0


def cmd_eval(args) -> int:
    preds = {ps.video_id: ps for ps in read_proposals(args.preds)}
    gts = {gt.video_id: gt for gt in read_ground_truth(args.gt)}
    report = evaluate(preds, gts, thresholds=args.preset)
    write_report(report, args.out)
    print(json.dumps({"record": "eval", "average_map": report.average_map}))
    return 0


def cmd_delta(args) -> int:
    report_a = read_report(args.a)
    report_b = read_report(args.b)
    deltas = per_class_delta(report_a, report_b, args.iou)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "ap_a", "ap_b", "delta_ap"])
        for label, delta in deltas:
            writer.writerow(
                [
                    label,
                    repr(report_a.per_class_ap[label][args.iou]),
                    repr(report_b.per_class_ap[label][args.iou]),
                    repr(delta),
                ]
            )
    print(json.dumps({"record": "delta", "classes": len(deltas)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="talfuse",
        description="Audio-visual fusion pipeline for temporal action localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset + manifest")
    p.add_argument("--config", help="flat JSON config (see --dump-config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dump-config", action="store_true", help="print defaults and exit")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("align", help="align an audio/video feature pair")
    p.add_argument("--method", required=True, choices=pipeline.ALIGN_METHODS)
    p.add_argument("--video", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--out", required=True, help="output prefix for .video.mmfs/.audio.mmfs/.trace.json")
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("fuse", help="fuse an audio/video pair into one sequence")
    p.add_argument("--scheme", required=True, choices=("concat", "rmattn"))
    p.add_argument("--params", help="checkpoint with attention parameters (rmattn)")
    p.add_argument("--video", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--align", default="paired", choices=pipeline.ALIGN_METHODS)
    p.add_argument("--seed", type=int, default=0, help="init seed when --params is absent")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("train", help="train the snippet scorer on a manifest")
    p.add_argument("--manifest")
    p.add_argument("--scheme", choices=pipeline.SCHEMES)
    p.add_argument("--config", help="flat JSON config (see --dump-config)")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--dump-config", action="store_true", help="print defaults and exit")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="score test videos and emit proposals")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("nms-fuse", help="pool proposal files per video, then NMS")
    p.add_argument("--inputs", required=True, help="comma-separated proposal files")
    p.add_argument("--iou", required=True, type=float)
    p.add_argument("--max-out", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_nms_fuse)

    p = sub.add_parser("eval", help="evaluate proposals against ground truth")
    p.add_argument("--preds", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--out", required=True, help="report path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("delta", help="per-class AP delta between two reports")
    p.add_argument("--a", required=True, help="report whose AP is the minuend")
    p.add_argument("--b", required=True, help="baseline report")
    p.add_argument("--iou", required=True, type=float)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(fn=cmd_delta)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # single-line machine-readable error record
        print(
            json.dumps({"record": "error", "error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
