"""Command-line entry point: ``mmfas <subcommand> ...`` (or ``python -m mmfas``)."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import depth_prep
from .checkpoint import load_checkpoint
from .dataset_io import SyntheticSpec, generate_synthetic, make_manifest
from .imageio import read_png8, read_raw, write_png8
from .metrics import write_scores
from .quality import DegradeSpec, degrade, quality
from .train import TrainConfig, evaluate_model, load_dataset, train, visualize_mfam

log = logging.getLogger("mmfas")


def cmd_prep(args) -> int:
    box = depth_prep.FaceBox.parse(args.bbox)
    rgb = read_png8(args.rgb)
    depth, _ = read_raw(args.depth)
    ir, ir_max = read_raw(args.ir)
    normalize = depth_prep.NORMALIZERS[args.algo]
    depth8 = normalize(depth, box, portrait_factor=args.factor)
    ir8 = depth_prep.quantize_ir_uniform(ir, args.ir_max_raw or ir_max)
    crops = depth_prep.crop_multimodal(rgb, depth8, ir8, box, args.factor)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in zip(("rgb", "depth", "ir"), crops):
        write_png8(out / f"{name}.png", img)
    print(f"wrote {out}/{{rgb,depth,ir}}.png ({crops[1].shape[1]}x{crops[1].shape[0]})")
    return 0


def cmd_degrade(args) -> int:
    spec = DegradeSpec(args.res, args.blur, args.kernel, args.sigma, args.blur_first)
    write_png8(args.output, degrade(read_png8(args.input), spec))
    return 0


def cmd_quality(args) -> int:
    print(quality(read_png8(args.reference), read_png8(args.test)))
    return 0


def cmd_gen_synth(args) -> int:
    spec = SyntheticSpec(n_live=args.n_live, n_spoof=args.n_spoof, resolution=args.res, seed=args.seed)
    entries = generate_synthetic(spec, args.out)
    print(f"wrote {len(entries)} samples and {Path(args.out) / 'manifest.tsv'}")
    return 0


def cmd_make_manifest(args) -> int:
    entries = make_manifest(args.root, args.out, camera_tag=args.camera_tag)
    print(f"indexed {len(entries)} samples into {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = TrainConfig.from_toml(args.config) if args.config else TrainConfig()
    res = train(cfg, args.data, out_dir=args.out, resume=args.resume, max_steps=args.max_steps,
                eval_data=args.eval_data)
    last = [r for r in res.log if "loss" in r]
    if last:
        print(f"step {last[-1]['step']} loss {last[-1]['loss']:.4f}; checkpoint {res.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.data)
    scores, report = evaluate_model(model, samples, threshold=args.threshold)
    if args.scores:
        write_scores(args.scores, [s.sample_id for s in samples], [s.label for s in samples], scores)
    if args.report:
        json_path = Path(args.report).with_suffix(".json")
        report.save(args.report, json_path)
    print(report.to_text(), end="")
    return 0


def cmd_viz_mfam(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    samples = {s.sample_id: s for s in load_dataset(args.data)}
    if args.sample not in samples:
        raise SystemExit(f"sample {args.sample!r} not found in {args.data}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for modality, views in visualize_mfam(model, samples[args.sample]).items():
        for kind in ("bilinear", "sr", "diff"):
            write_png8(out / f"{modality}_{kind}.png", views[kind])
        print(f"{modality}: mean |sr - bilinear| = {views['mean_abs_diff']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfas", description="Multi-modal face anti-spoofing toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="normalize depth, quantize IR and crop the portrait region")
    p.add_argument("--algo", choices=sorted(depth_prep.NORMALIZERS), default="alg2")
    p.add_argument("--factor", type=float, default=depth_prep.PORTRAIT_FACTOR)
    p.add_argument("--bbox", required=True, help="face box as x,y,w,h")
    p.add_argument("--rgb", required=True, help="8-bit RGB PNG")
    p.add_argument("--depth", required=True, help="raw depth (FASD tile or 16-bit PNG)")
    p.add_argument("--ir", required=True, help="raw IR (FASD tile or 16-bit PNG)")
    p.add_argument("--ir-max-raw", type=int, default=None, help="override the IR full-scale value")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("degrade", help="downsample (and blur) an 8-bit image")
    p.add_argument("--res", type=int, required=True)
    p.add_argument("--blur", action="store_true")
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--sigma", type=float, default=1.5)
    p.add_argument("--blur-first", action="store_true", help="blur before resizing")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("quality", help="print PSNR and SSIM of test against reference")
    p.add_argument("reference")
    p.add_argument("test")
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("gen-synth", help="write a seeded synthetic dataset")
    p.add_argument("--n-live", type=int, default=32)
    p.add_argument("--n-spoof", type=int, default=32)
    p.add_argument("--res", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("make-manifest", help="index a <label>/<attack_type>/<sample_id>/ tree")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--camera-tag", default="")
    p.set_defaults(func=cmd_make_manifest)

    p = sub.add_parser("train", help="train from a TOML config")
    p.add_argument("--config", help="TOML file with TrainConfig fields")
    p.add_argument("--data", required=True, help="dataset directory or manifest")
    p.add_argument("--out", required=True, help="run directory (log + checkpoints)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--eval-data", help="dataset for periodic evaluation (default: training set)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a dataset with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scores", help="write id/label/score TSV here")
    p.add_argument("--report", help="write the text report here (JSON alongside)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz-mfam", help="render bilinear / SR / difference images for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", required=True, help="sample_id from the manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viz_mfam)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"mmfas {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
