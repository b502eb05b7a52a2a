"""Train the default toy denoiser and install it as checkpoints/default.

    python3 scripts/train_default.py [--config configs/default.json]

Takes roughly 20-25 minutes on one CPU core.
"""

import argparse
import logging
import shutil
from pathlib import Path

from stagebokeh.harness.config import load_config
from stagebokeh.toymodel.training import train

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "default.json")
    ap.add_argument("--run-dir", type=Path, default=ROOT / "runs" / "train_default")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    ckpt = train(cfg.train_config(), cfg.model_config(), cfg.noise_schedule(), args.run_dir)
    target = ROOT / "checkpoints" / "default"
    if target.exists():
        shutil.rmtree(target)
    shutil.copytree(args.run_dir / "checkpoint", target)
    shutil.copy(args.run_dir / "loss.csv", ROOT / "checkpoints" / "default_loss.csv")
    t = ckpt.training
    print(f"eval loss {t['eval_loss']:.4f} after {t['steps']} steps, {t['wall_seconds'] / 60:.1f} min -> {target}")


if __name__ == "__main__":
    main()
