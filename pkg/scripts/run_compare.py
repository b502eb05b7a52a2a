"""Baseline vs stage diffusion over seeds, with the one-sided sign test.

    python3 scripts/run_compare.py [--seeds 16] [--sigma 0.8] [--alpha 1.0]
"""

import argparse
from pathlib import Path

from stagebokeh.harness.config import load_config
from stagebokeh.harness.experiments import check_vocabulary, run_compare
from stagebokeh.toymodel.checkpoint import load_checkpoint

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "default.json")
    ap.add_argument("--checkpoint", type=Path, default=ROOT / "checkpoints" / "default")
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "compare")
    ap.add_argument("--seeds", type=int)
    ap.add_argument("--sigma", type=float)
    ap.add_argument("--alpha", type=float)
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.seeds is not None:
        cfg.compare.num_seeds = args.seeds
    if args.sigma is not None:
        cfg.plan.sigma = args.sigma
    if args.alpha is not None:
        cfg.plan.alpha = args.alpha
    ckpt = load_checkpoint(args.checkpoint)
    check_vocabulary(cfg, ckpt)
    s = run_compare(ckpt, cfg, args.out)
    for role in ("focused", "bokeh"):
        print(f"{role:>8} ({s[role + '_roi']}): VoL {s[role + '_baseline_vol_mean']:.1f} -> {s[role + '_stage_vol_mean']:.1f}"
              f"  (x{s[role + '_vol_ratio_of_means']:.3f}),  Brenner x{s[role + '_brenner_ratio_of_means']:.3f}")
    print(f"sign test (focused VoL up): {s['sign_test_wins']}/{s['sign_test_untied']}, p = {s['sign_test_p']:.4g}")


if __name__ == "__main__":
    main()
