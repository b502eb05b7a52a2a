"""Stage-fraction sweep over both local prompts, including the sigma=0.2 probe.

    python3 scripts/run_sweep.py [--checkpoint checkpoints/default] [--out runs/sweep]

Prints the batch-mean VoL of each ROI per (sigma, local prompt).
"""

import argparse
from pathlib import Path

from stagebokeh.harness.config import load_config
from stagebokeh.harness.experiments import check_vocabulary, run_sweep
from stagebokeh.toymodel.checkpoint import load_checkpoint

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "sweep.json")
    ap.add_argument("--checkpoint", type=Path, default=ROOT / "checkpoints" / "default")
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "sweep")
    args = ap.parse_args()

    cfg = load_config(args.config)
    ckpt = load_checkpoint(args.checkpoint)
    check_vocabulary(cfg, ckpt)
    res = run_sweep(ckpt, cfg, args.out)
    print(f"{'sigma':>6}  {'local prompt':<28} {'roi':<6} {'VoL':>10} {'Brenner':>12}")
    for sigma, prompt, roi, vol, bren in res["rows"]:
        print(f"{sigma:>6}  {prompt:<28} {roi:<6} {vol:>10.1f} {bren:>12.0f}")
    print(f"contact sheet: {args.out / 'contact_sheet.png'}")


if __name__ == "__main__":
    main()
