"""Focus measures: Laplacian, variance of Laplacian, Brenner, blur maps, ROI reports.

All measures work on grayscale intensities rescaled to ``[0, 255]``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])
LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)
REPORT_COLUMNS = ["roi", "vol", "brenner", "baseline_vol", "baseline_brenner", "vol_ratio", "brenner_ratio"]


def to_gray(img) -> np.ndarray:
    """``(H, W)`` float64 luma from an ``(H, W)`` or ``(H, W, 3)`` image in ``[0, 1]``."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3:
        if a.shape[2] != 3:
            raise ValueError(f"expected 3 channels, got {a.shape[2]}")
        a = a @ LUMA
    elif a.ndim != 2:
        raise ValueError(f"expected (H, W) or (H, W, 3), got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("image has non-finite values")
    return a


@dataclass(frozen=True)
class Roi:
    x0: int
    y0: int
    width: int
    height: int

    def validate(self, shape: tuple[int, ...]) -> None:
        h, w = shape[:2]
        if self.x0 < 0 or self.y0 < 0 or self.x0 + self.width > w or self.y0 + self.height > h:
            raise ValueError(f"{self} exceeds image bounds {h}x{w}")
        if self.width * self.height < 9 or self.width < 1 or self.height < 1:
            raise ValueError(f"{self} needs an area of at least 9 pixels")

    def slice(self, a: np.ndarray) -> np.ndarray:
        return a[self.y0:self.y0 + self.height, self.x0:self.x0 + self.width]

    @classmethod
    def full(cls, shape: tuple[int, ...]) -> "Roi":
        return cls(0, 0, shape[1], shape[0])


def laplacian(img) -> np.ndarray:
    """Four-neighbour Laplacian of the 255-scaled gray image, replicate-padded."""
    g = to_gray(img) * 255.0
    if g.shape[0] < 3 or g.shape[1] < 3:
        raise ValueError(f"image {g.shape} smaller than the 3x3 kernel")
    p = np.pad(g, 1, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * g


def variance_of_laplacian(img, roi: Roi | None = None) -> float:
    """Population variance of the Laplacian inside ``roi`` (whole image by default)."""
    lap = laplacian(img)
    roi = roi or Roi.full(lap.shape)
    roi.validate(lap.shape)
    return float(np.var(roi.slice(lap)))


def brenner(img, roi: Roi | None = None) -> float:
    """Sum of squared horizontal differences at a shift of two pixels inside ``roi``."""
    g = to_gray(img) * 255.0
    roi = roi or Roi.full(g.shape)
    roi.validate(g.shape)
    if roi.width < 3:
        raise ValueError(f"{roi} too narrow for a shift of 2")
    r = roi.slice(g)
    return float(np.sum((r[:, 2:] - r[:, :-2]) ** 2))


def blur_map(img) -> np.ndarray:
    """Absolute Laplacian min/max-normalised to ``[0, 1]``; flat responses map to zeros."""
    a = np.abs(laplacian(img))
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


@dataclass
class RoiScore:
    roi: str
    vol: float
    brenner: float
    baseline_vol: float | None = None
    baseline_brenner: float | None = None
    vol_ratio: float | None = None
    brenner_ratio: float | None = None


def _ratio(value: float, base: float) -> float:
    if base == 0.0:
        return 1.0 if value == 0.0 else float("inf")
    return value / base


@dataclass
class FocusReport:
    entries: list[RoiScore] = field(default_factory=list)

    def __getitem__(self, name: str) -> RoiScore:
        for e in self.entries:
            if e.roi == name:
                return e
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps({"rois": [asdict(e) for e in self.entries]}, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for e in self.entries:
            w.writerow([_fmt(getattr(e, c)) for c in REPORT_COLUMNS])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def score_rois(image, rois: Mapping[str, Roi], baseline=None) -> FocusReport:
    """VoL and Brenner per named ROI, with ratios against ``baseline`` if given."""
    img = to_gray(image)
    base = None
    if baseline is not None:
        base = to_gray(baseline)
        if base.shape != img.shape:
            raise ValueError(f"baseline shape {base.shape} differs from image shape {img.shape}")
    report = FocusReport()
    for name, roi in rois.items():
        s = RoiScore(name, variance_of_laplacian(img, roi), brenner(img, roi))
        if base is not None:
            s.baseline_vol = variance_of_laplacian(base, roi)
            s.baseline_brenner = brenner(base, roi)
            s.vol_ratio = _ratio(s.vol, s.baseline_vol)
            s.brenner_ratio = _ratio(s.brenner, s.baseline_brenner)
        report.entries.append(s)
    return report
