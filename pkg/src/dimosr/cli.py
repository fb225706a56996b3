"""Command-line interface: ingest, train, eval, infer, inspect, gradcheck."""

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import data as datamod
from . import gradsuite, optim
from .checkpoint import load_checkpoint
from .config import build_run_config, parse_override_tokens
from .errors import DimosrError
from .metrics import EvalProtocol, psnr, ssim
from .model import (build_model, config_to_dict, flops_count, param_count,
                    param_specs, preset_config)

log = logging.getLogger("dimosr")


def _setup_logging():
    level = os.environ.get("DIMOSR_LOG_LEVEL", "info").strip().lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING,
              "error": logging.ERROR, "quiet": logging.CRITICAL}
    logging.basicConfig(level=levels.get(level, logging.INFO), format="%(message)s")


def cmd_ingest(args):
    manifest, skipped = datamod.ingest(args.directory, args.scale, lr_dir=args.lr_dir,
                                       generate_lr=not args.no_lr)
    out = Path(args.out) if args.out else Path(args.directory) / f"manifest_x{args.scale}.json"
    datamod.write_manifest(manifest, out)
    for rel, reason in skipped:
        log.warning("skipped %s: %s", rel, reason)
    log.info("wrote %s (%d entries, scale x%d)", out, len(manifest.entries), args.scale)
    return 0


def cmd_train(args):
    overrides = parse_override_tokens(args.overrides)
    cfg = build_run_config(preset=args.preset, config_file=args.config, overrides=overrides)
    train_path = args.data or cfg.train_manifest
    if not train_path:
        raise DimosrError("no training manifest: pass --data or set paths.train_manifest")
    out_dir = args.out or cfg.out_dir or "runs/latest"
    train_manifest = datamod.load_manifest(train_path)
    val_manifest = None
    val_path = args.val or cfg.val_manifest
    if val_path:
        val_manifest = datamod.load_manifest(val_path)

    network = build_model(cfg.model, seed=cfg.train.seed)
    log.info("training %s (%d params) for %d iterations", config_to_dict(cfg.model),
             param_count(network), cfg.train.iterations)

    def progress(record):
        line = f"iter {record['iteration']:>7}  lr {record['lr']:.3e}  loss {record['loss']:.5f}"
        if "eval" in record:
            ev = record["eval"]["val"]
            line += f"  val psnr {ev['psnr']:.3f} ssim {ev['ssim']:.4f}"
        log.info("%s", line)

    result = optim.train(network, cfg.train, train_manifest, out_dir,
                         val_manifest=val_manifest, progress=progress)
    log.info("final checkpoint: %s", result.checkpoint_path)
    return 0


def _fmt_psnr(value):
    return "inf" if math.isinf(value) else f"{value:.4f}"


def cmd_eval(args):
    protocol = None
    if args.border_crop is not None:
        protocol = EvalProtocol(border_crop=args.border_crop)
    manifest = datamod.load_manifest(args.data)
    sources = [datamod.load_pair(manifest, i) for i in range(len(manifest.entries))]

    if args.sr_dir:
        # score precomputed SR images instead of running a model
        protocol = protocol or EvalProtocol.for_scale(manifest.scale)
        rows = []
        for src in sources:
            sr = datamod.load_png(Path(args.sr_dir) / src.source_id)
            rows.append((src.source_id, psnr(sr, src.hr, protocol), ssim(sr, src.hr, protocol)))
        for name, p, s in rows:
            print(f"{name}  psnr {_fmt_psnr(p)}  ssim {s:.4f}")
        finite = [p for _, p, _ in rows if math.isfinite(p)]
        mean_p = float(np.mean(finite)) if finite else math.inf
        print(f"mean  psnr {_fmt_psnr(mean_p)}  ssim {float(np.mean([s for *_, s in rows])):.4f}")
        return 0

    if not args.checkpoint:
        raise DimosrError("pass --checkpoint (or --sr-dir for precomputed outputs)")
    network = load_checkpoint(args.checkpoint).network
    report = optim.evaluate(network, sources, protocol)
    for row in report["images"]:
        print(f"{row['id']}  psnr {_fmt_psnr(row['psnr'])}  ssim {row['ssim']:.4f}")
    print(f"mean  psnr {_fmt_psnr(report['psnr'])}  ssim {report['ssim']:.4f}")
    return 0


def cmd_infer(args):
    network = load_checkpoint(args.checkpoint).network
    lr = datamod.load_png(args.input)
    sr = np.clip(network.forward(lr), 0.0, 1.0)
    datamod.save_png(sr, args.output)
    log.info("wrote %s (%dx%d)", args.output, sr.shape[3], sr.shape[2])
    return 0


def cmd_inspect(args):
    if args.checkpoint:
        network = load_checkpoint(args.checkpoint).network
        config = network.config
    else:
        config = preset_config(args.preset, scale=args.scale)
        network = build_model(config)
    try:
        out_w, out_h = (int(v) for v in args.out_size.lower().split("x"))
    except ValueError:
        raise DimosrError(f"--out-size must look like 1280x720, got {args.out_size!r}") from None

    print(f"config: {config_to_dict(config)}")
    print(f"parameters: {param_count(network):,}")
    print(f"flops @ {out_w}x{out_h} output: {flops_count(config, out_h, out_w) / 1e9:.2f} G "
          f"(MACs at LR resolution)")
    if args.layers:
        for name, shape, _ in param_specs(config):
            print(f"  {name:<40} {str(tuple(shape)):>18}")
    return 0


def cmd_gradcheck(args):
    results = gradsuite.run_suite(full=args.full, seed=args.seed)
    failed = 0
    for r in results:
        print(r)
        if not r.report.passed:
            failed += 1
    print(f"{len(results) - failed}/{len(results)} gradient checks passed")
    return 1 if failed else 0


def main(argv=None):
    _setup_logging()
    parser = argparse.ArgumentParser(prog="dimosr",
                                     description="Super-resolution engine CLI")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan HR PNGs into a dataset manifest")
    p.add_argument("directory")
    p.add_argument("--scale", type=int, required=True, choices=(2, 3, 4))
    p.add_argument("--out", help="manifest path (default <dir>/manifest_x<scale>.json)")
    p.add_argument("--lr-dir", help="where to write the bicubic LR set")
    p.add_argument("--no-lr", action="store_true", help="skip pre-generating LR images")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--preset", default="dimosr", help="dimosr, dimosr-s, or toy")
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--data", help="training manifest")
    p.add_argument("--val", help="validation manifest")
    p.add_argument("--out", help="output directory")
    p.add_argument("overrides", nargs=argparse.REMAINDER,
                   help="dotted overrides, e.g. --train.lambda 0")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--sr-dir", help="score precomputed SR PNGs instead of a checkpoint")
    p.add_argument("--border-crop", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="super-resolve one PNG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("inspect", help="parameter/FLOP counts and layer table")
    p.add_argument("--preset", default="dimosr")
    p.add_argument("--checkpoint")
    p.add_argument("--scale", type=int, default=4, choices=(2, 3, 4))
    p.add_argument("--out-size", default="1280x720")
    p.add_argument("--layers", action="store_true", help="print the per-layer shape table")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gradcheck", help="finite-difference the autodiff engine")
    p.add_argument("--full", action="store_true",
                   help="also spot-check the full-size preset")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DimosrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
