"""Command line entry point: ``python -m stagebokeh <command>``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from ..metrics import Roi
from ..toymodel.checkpoint import CheckpointError, load_checkpoint
from ..toymodel.training import TrainingDiverged, train
from .config import ConfigError, ExperimentConfig, load_config
from . import experiments

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_CHECKPOINT = "checkpoints/default"

log = logging.getLogger("stagebokeh")


def _parse_roi(text: str) -> tuple[str, Roi]:
    try:
        name, box = text.split("=", 1)
        x0, y0, w, h = (int(v) for v in box.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected name=x0,y0,width,height, got {text!r}") from None
    return name, Roi(x0, y0, w, h)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment JSON config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="overrides the config seed; all randomness derives from it")
    common.add_argument("--out", type=Path, help="output directory (overrides config out_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    ckpt = argparse.ArgumentParser(add_help=False)
    ckpt.add_argument("--checkpoint", type=Path, default=Path(DEFAULT_CHECKPOINT))

    p = argparse.ArgumentParser(prog="stagebokeh", description="Two-stage prompt conditioning for generative bokeh.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train the toy denoiser")
    g = sub.add_parser("generate", parents=[common, ckpt], help="text-to-image batch with focus report")
    g.add_argument("--baseline", action="store_true", help="single-stage sampling with the global prompt")
    i = sub.add_parser("img2img", parents=[common, ckpt], help="refocus an existing image")
    i.add_argument("--input", type=Path, required=True)
    i.add_argument("--strength", type=float)
    sub.add_parser("sweep", parents=[common, ckpt], help="stage-fraction sweep")
    sub.add_parser("compare", parents=[common, ckpt], help="baseline vs stage diffusion over seeds")
    s = sub.add_parser("score", parents=[common], help="focus metrics for a PNG")
    s.add_argument("image", type=Path)
    s.add_argument("--baseline", type=Path)
    s.add_argument("--roi", type=_parse_roi, action="append", default=[], help="name=x0,y0,width,height")
    sub.add_parser("schema", help="print the default config (the full schema with defaults)")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = str(args.out)
    return cfg


def _run(args) -> int:
    if args.command == "schema":
        import json

        print(json.dumps(ExperimentConfig().to_dict(), indent=2))
        return EXIT_OK

    cfg = _config(args)
    out = Path(cfg.out_dir)
    if args.command == "train":
        ckpt = train(cfg.train_config(), cfg.model_config(), cfg.noise_schedule(), out)
        t = ckpt.training
        print(f"trained {t['steps']} steps in {t['wall_seconds']:.0f}s, eval loss {t['eval_loss']:.4f} -> {out}")
        return EXIT_OK
    if args.command == "score":
        print(experiments.run_score(args.image, dict(args.roi) or None, args.baseline, args.out), end="")
        return EXIT_OK

    ckpt = load_checkpoint(args.checkpoint)
    experiments.check_vocabulary(cfg, ckpt)
    if args.command == "generate":
        report = experiments.run_generate(ckpt, cfg, out, baseline=args.baseline)
        print(f"wrote {len(report['images'])} images to {out}")
    elif args.command == "img2img":
        res = experiments.run_img2img(ckpt, cfg, args.input, out, args.strength)
        if not np.all(np.isfinite(res["image"])):
            raise FloatingPointError("non-finite pixels in img2img output")
        print(res["report"].to_csv(), end="")
    elif args.command == "sweep":
        experiments.run_sweep(ckpt, cfg, out)
        print(f"wrote sweep.csv and contact_sheet.png to {out}")
    elif args.command == "compare":
        s = experiments.run_compare(ckpt, cfg, out)
        print(
            f"focused VoL ratio of means {s['focused_vol_ratio_of_means']:.3f}, "
            f"bokeh VoL ratio of means {s['bokeh_vol_ratio_of_means']:.3f}, "
            f"sign test p={s['sign_test_p']:.4g} ({s['sign_test_wins']}/{s['sign_test_untied']})"
        )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        return _run(args)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
