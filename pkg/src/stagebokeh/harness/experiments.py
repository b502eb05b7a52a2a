"""Experiment runners behind the CLI subcommands.

Each runner is a pure function of (config, checkpoint, seed) to the files it
writes. Metrics are always computed on the in-memory float images, never on
re-decoded PNGs.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from ..metrics import Roi, blur_map, brenner, score_rois, variance_of_laplacian
from ..sampler import generate_image_to_image, generate_text_to_image, sample_single_stage
from ..toymodel.checkpoint import Checkpoint
from ..toymodel.scenes import SIDES, coverage, parse_global_prompt
from .config import ConfigError, ExperimentConfig, focus_side
from .stats import sign_test_greater

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ["sigma", "local_prompt", "roi", "vol", "brenner"]
COMPARE_COLUMNS = [
    "seed", "roi", "role",
    "baseline_vol", "stage_vol", "vol_ratio",
    "baseline_brenner", "stage_brenner", "brenner_ratio",
]


# --- images -----------------------------------------------------------------------


def to_uint8(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = np.repeat(a[..., None], 3, axis=2)
    return np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(img: np.ndarray, path: Path) -> None:
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def contact_sheet(rows: list[list[np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate(r, axis=1) for r in rows], axis=0)


# --- regions of interest ------------------------------------------------------------


def object_roi(global_prompt, side: str, height: int = 64, width: int = 64) -> Roi:
    """Bounding box of the object's covered pixels, intersected with its half."""
    spec = parse_global_prompt(global_prompt)
    cov = coverage(spec.by_side(side).shape, side, height, width)
    ys, xs = np.nonzero(cov > 0)
    half_lo, half_hi = (0, width // 2) if side == "left" else (width // 2, width)
    x0, x1 = max(xs.min(), half_lo), min(xs.max() + 1, half_hi)
    y0, y1 = ys.min(), ys.max() + 1
    return Roi(int(x0), int(y0), int(x1 - x0), int(y1 - y0))


def resolve_rois(cfg: ExperimentConfig, height: int, width: int) -> dict[str, Roi]:
    explicit = cfg.explicit_rois()
    if explicit is not None:
        for roi in explicit.values():
            roi.validate((height, width))
        return explicit
    return {side: object_roi(cfg.plan.global_prompt, side, height, width) for side in SIDES}


def check_vocabulary(cfg: ExperimentConfig, ckpt: Checkpoint) -> None:
    vocab = set(ckpt.vocabulary)
    prompts = [cfg.plan.global_prompt, cfg.plan.local_prompt, *(cfg.sweep.local_prompts or [])]
    for p in prompts:
        bad = [t for t in p if t not in vocab]
        if bad:
            raise ConfigError(f"tokens {bad} not in checkpoint vocabulary")
    if ckpt.schedule != cfg.noise_schedule().to_dict():
        raise ConfigError(f"config schedule {cfg.noise_schedule().to_dict()} differs from checkpoint {ckpt.schedule}")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --- commands -----------------------------------------------------------------------


def run_generate(ckpt: Checkpoint, cfg: ExperimentConfig, out: Path, baseline: bool = False) -> dict:
    """Batch of images, their blur maps and one ``report.json``."""
    out.mkdir(parents=True, exist_ok=True)
    model = ckpt.to_model()
    schedule = ckpt.noise_schedule()
    sc = cfg.sampler_config()
    if baseline:
        images = sample_single_stage(model, cfg.plan.global_prompt, sc, schedule)
    else:
        images = generate_text_to_image(model, cfg.stage_plan(), sc, schedule)
    h, w = images.shape[1:3]
    rois = resolve_rois(cfg, h, w)
    entries = []
    for i, img in enumerate(images):
        save_png(img, out / f"image_{i:02d}.png")
        save_png(blur_map(img), out / f"blurmap_{i:02d}.png")
        rep = score_rois(img, rois)
        entries.append({"index": i, "file": f"image_{i:02d}.png", "rois": json.loads(rep.to_json())["rois"]})
    report = {
        "mode": "baseline" if baseline else "stage",
        "seed": sc.seed,
        "plan": None if baseline else {
            "sigma": cfg.plan.sigma, "alpha": cfg.plan.alpha, "boundary": cfg.stage_plan().boundary,
            "global_prompt": cfg.plan.global_prompt, "local_prompt": cfg.plan.local_prompt,
        },
        "rois": {k: [r.x0, r.y0, r.width, r.height] for k, r in rois.items()},
        "images": entries,
    }
    _write_json(out / "report.json", report)
    return report


def run_img2img(ckpt: Checkpoint, cfg: ExperimentConfig, input_path: Path, out: Path, strength: float | None = None) -> dict:
    """One image-to-image output scored against the input image as baseline."""
    out.mkdir(parents=True, exist_ok=True)
    model = ckpt.to_model()
    schedule = ckpt.noise_schedule()
    src = load_png(input_path)
    if (3, *src.shape[:2]) != model.sample_shape:
        raise ConfigError(f"input image is {src.shape[0]}x{src.shape[1]}, model canvas is {model.sample_shape[1]}x{model.sample_shape[2]}")
    strength = cfg.img2img.strength if strength is None else strength
    if not 0.0 < strength <= 1.0:
        raise ConfigError(f"strength {strength} outside (0, 1]")
    img = generate_image_to_image(model, src, strength, cfg.stage_plan(), cfg.sampler_config(batch=1), schedule)[0]
    save_png(img, out / "output.png")
    save_png(blur_map(img), out / "output_blurmap.png")
    report = score_rois(img, resolve_rois(cfg, *img.shape[:2]), baseline=src)
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.json").write_text(report.to_json() + "\n")
    return {"image": img, "report": report}


def _mean_roi_scores(images: np.ndarray, rois: dict[str, Roi]) -> dict[str, tuple[float, float]]:
    return {
        name: (
            float(np.mean([variance_of_laplacian(im, roi) for im in images])),
            float(np.mean([brenner(im, roi) for im in images])),
        )
        for name, roi in rois.items()
    }


def run_sweep(ckpt: Checkpoint, cfg: ExperimentConfig, out: Path) -> dict:
    """Stage-fraction sweep with one shared seed; rows are local prompts, columns sigmas."""
    out.mkdir(parents=True, exist_ok=True)
    model = ckpt.to_model()
    schedule = ckpt.noise_schedule()
    sc = cfg.sampler_config()
    local_prompts = cfg.sweep.local_prompts or [
        [t for t in cfg.plan.global_prompt if t == side or t.startswith(f"{side}_")] for side in SIDES
    ]
    h, w = model.sample_shape[1:]
    rois = resolve_rois(cfg, h, w)

    def sweep(sigmas):
        rows, grid = [], []
        for lp in local_prompts:
            strip = []
            for sigma in sigmas:
                images = generate_text_to_image(model, cfg.stage_plan(sigma, lp), sc, schedule)
                strip.append(images[0])
                for name, (vol, bren) in _mean_roi_scores(images, rois).items():
                    rows.append([float(sigma), " ".join(lp), name, vol, bren])
            grid.append(strip)
        return rows, grid

    rows, grid = sweep(cfg.sweep.sigmas)
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    save_png(contact_sheet(grid), out / "contact_sheet.png")
    summary = {"seed": sc.seed, "sigmas": cfg.sweep.sigmas, "local_prompts": local_prompts, "exploratory": []}
    if cfg.sweep.probe_sigmas:
        probe_rows, probe_grid = sweep(cfg.sweep.probe_sigmas)
        _write_csv(out / "sweep_exploratory.csv", SWEEP_COLUMNS, probe_rows)
        save_png(contact_sheet(probe_grid), out / "contact_sheet_exploratory.png")
        summary["exploratory"] = cfg.sweep.probe_sigmas
    _write_json(out / "sweep.json", summary)
    return {"rows": rows, "grid": grid, "summary": summary}


def run_compare(ckpt: Checkpoint, cfg: ExperimentConfig, out: Path, write_images: bool = True) -> dict:
    """Single-stage baseline vs stage diffusion over ``compare.num_seeds`` seeds.

    Seeds run ``seed, seed + 1, ...``. Per seed, ROI scores are averaged
    over the batch. The sign test asks whether the focused object's VoL is
    larger under stage diffusion.
    """
    out.mkdir(parents=True, exist_ok=True)
    model = ckpt.to_model()
    schedule = ckpt.noise_schedule()
    plan = cfg.stage_plan()
    focused = focus_side(plan.local_prompt)
    bokeh = next(s for s in SIDES if s != focused)
    h, w = model.sample_shape[1:]
    rois = resolve_rois(cfg, h, w)
    if cfg.explicit_rois() is not None and not {focused, bokeh} <= set(rois):
        raise ConfigError(f"compare needs ROIs named {focused!r} and {bokeh!r}")

    rows, per_seed = [], []
    for k in range(cfg.compare.num_seeds):
        seed = cfg.seed + k
        sc = cfg.sampler_config(seed=seed)
        base = sample_single_stage(model, plan.global_prompt, sc, schedule)
        stage = generate_text_to_image(model, plan, sc, schedule)
        if write_images:
            save_png(np.concatenate(list(base), axis=1), out / f"seed{seed:04d}_baseline.png")
            save_png(np.concatenate(list(stage), axis=1), out / f"seed{seed:04d}_stage.png")
        sb, ss = _mean_roi_scores(base, rois), _mean_roi_scores(stage, rois)
        rec = {"seed": seed}
        for side, role in ((focused, "focused"), (bokeh, "bokeh")):
            (bv, bb), (sv, sbr) = sb[side], ss[side]
            rows.append([seed, side, role, bv, sv, _ratio(sv, bv), bb, sbr, _ratio(sbr, bb)])
            rec[role] = {"baseline_vol": bv, "stage_vol": sv, "baseline_brenner": bb, "stage_brenner": sbr}
        per_seed.append(rec)
        log.info("seed %d: focused VoL %.1f -> %.1f, bokeh VoL %.1f -> %.1f", seed,
                 rec["focused"]["baseline_vol"], rec["focused"]["stage_vol"],
                 rec["bokeh"]["baseline_vol"], rec["bokeh"]["stage_vol"])

    _write_csv(out / "compare.csv", COMPARE_COLUMNS, rows)
    summary = summarize_compare(per_seed)
    summary.update({"focused_roi": focused, "bokeh_roi": bokeh, "sigma": plan.sigma, "alpha": plan.alpha})
    _write_json(out / "compare.json", summary)
    return summary


def _ratio(value: float, base: float) -> float:
    if base == 0.0:
        return 1.0 if value == 0.0 else float("inf")
    return value / base


def summarize_compare(per_seed: list[dict]) -> dict:
    summary: dict = {"num_seeds": len(per_seed)}
    for role in ("focused", "bokeh"):
        for metric in ("vol", "brenner"):
            b = [r[role][f"baseline_{metric}"] for r in per_seed]
            s = [r[role][f"stage_{metric}"] for r in per_seed]
            summary[f"{role}_baseline_{metric}_mean"] = float(np.mean(b))
            summary[f"{role}_stage_{metric}_mean"] = float(np.mean(s))
            summary[f"{role}_{metric}_ratio_of_means"] = _ratio(float(np.mean(s)), float(np.mean(b)))
            summary[f"{role}_{metric}_mean_ratio"] = float(np.mean([_ratio(x, y) for x, y in zip(s, b)]))
    p, wins, n = sign_test_greater(
        [r["focused"]["stage_vol"] for r in per_seed], [r["focused"]["baseline_vol"] for r in per_seed]
    )
    summary.update({"sign_test_p": p, "sign_test_wins": wins, "sign_test_untied": n})
    return summary


def run_score(image_path: Path, rois: dict[str, Roi] | None, baseline_path: Path | None, out: Path | None) -> str:
    img = load_png(image_path)
    base = load_png(baseline_path) if baseline_path else None
    rois = rois or {"full": Roi.full(img.shape)}
    report = score_rois(img, rois, baseline=base)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report.to_csv())
        (out / "report.json").write_text(report.to_json() + "\n")
        save_png(blur_map(img), out / "blurmap.png")
    return report.to_csv()
