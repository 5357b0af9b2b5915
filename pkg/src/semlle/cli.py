"""Command-line entry points: decompose, enhance, train, eval, ablate.

Exit codes: 0 success, 1 I/O failure, 2 validation or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, dump_config, load_config
from .data import DatasetError, load_dataset, overfit_suite
from .imaging import ImageFormatError, as_image, load_image, save_image
from .network import enhance_any_size
from .retinex import EPS, decompose, recompose
from .semantic_prior import make_toy_backend
from .training import evaluate, metrics_csv, run_ablation, train

log = logging.getLogger("semlle")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


def _rgb(img: np.ndarray) -> np.ndarray:
    return np.repeat(img, 3, axis=-1) if img.shape[-1] == 1 else img


def cmd_decompose(args) -> int:
    img = _rgb(load_image(args.input))
    illum, refl = decompose(img)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(illum, out / "illumination.png")
    save_image(refl, out / "reflectance.png")
    if args.check:
        back = recompose((load_image(out / "illumination.png"), load_image(out / "reflectance.png")))
        err = float(np.max(np.abs(back - img)))
        bound = 2 * EPS + 1 / 255
        print(f"max recomposition error {err:.6f} (bound {bound:.6f})")
        if err > bound:
            return EXIT_INVALID
    return EXIT_OK


def _segmentation_for(model, backend_config):
    if not model.cfg.image_prior:
        return None
    cfg = dict(backend_config)
    return make_toy_backend(seed=cfg.get("seed", 0), num_classes=cfg.get("num_classes", 21),
                            num_scales=cfg.get("num_scales", model.cfg.scales))


def cmd_enhance(args) -> int:
    model, backend_config = load_checkpoint(args.checkpoint)
    seg = _segmentation_for(model, backend_config)
    img = _rgb(load_image(args.input)).astype(np.float32)
    out = enhance_any_size(model.eval(), img, seg)
    save_image(as_image(out, clip=True), args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    model, backend_config = load_checkpoint(args.checkpoint)
    seg = _segmentation_for(model, backend_config)
    rows = evaluate(model, load_dataset(args.data), seg)
    text = metrics_csv(rows)
    for line in text.splitlines():
        print(line.replace(",", "\t"))
    if args.output:
        Path(args.output).write_text(text)
    return EXIT_OK


def _train_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _dataset(path, patch):
    return overfit_suite(patch) if path is None else load_dataset(path, patch)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    _, records = train(cfg, _dataset(args.data, cfg.patch), out_dir=out)
    if records:
        print(f"trained {len(records)} steps; final total loss {records[-1].total:.6f}")
    print(f"checkpoint written to {out / 'final.safetensors'}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _train_config(args)
    holdout = load_dataset(args.holdout) if args.holdout else None
    result = run_ablation(cfg, _dataset(args.data, cfg.patch), holdout, out_dir=args.output_dir)
    print(result.render_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semlle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="split an image into illumination and reflectance PNGs")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--check", action="store_true", help="report the recomposition error of the written files")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("enhance", help="enhance one image with a trained checkpoint")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("train", help="train from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--data", help="dataset root with low/ and high/ (default: bundled overfit suite)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint on a paired dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", help="CSV path for the metrics table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the break-down and sub-loss ablations")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--data")
    p.add_argument("--holdout", help="dataset scored after training (default: the training set)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ImageFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
