"""Procedural two-object scenes with striped interiors.

Each scene holds one object in the left half of the canvas and one in the
right half. Interiors carry vertical stripes of period 4 px so that
focus metrics have texture to measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHAPES = ("circle", "square", "triangle")
COLORS = ("red", "green", "blue")
SIDES = ("left", "right")

RGB = {
    "red": (0.90, 0.15, 0.10),
    "green": (0.15, 0.85, 0.20),
    "blue": (0.15, 0.25, 0.95),
}
BACKGROUND = 0.5
STRIPE_PERIOD = 4
STRIPE_DARK = 0.35  # dark-stripe brightness relative to the object color
HALF_EXTENT = 11  # object half-size in px
SUPERSAMPLE = 4


@dataclass(frozen=True)
class ObjectSpec:
    shape: str
    color: str
    side: str
    texture_phase: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.color not in COLORS:
            raise ValueError(f"unknown color {self.color!r}")
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        if self.texture_phase not in range(STRIPE_PERIOD):
            raise ValueError(f"texture_phase must be in 0..{STRIPE_PERIOD - 1}")

    def tokens(self) -> tuple[str, str, str]:
        """Local prompt: the side token plus side-qualified shape and color."""
        return (self.side, f"{self.side}_{self.shape}", f"{self.side}_{self.color}")


@dataclass(frozen=True)
class SceneSpec:
    objects: tuple[ObjectSpec, ObjectSpec]
    height: int = 64
    width: int = 64

    def __post_init__(self):
        if len(self.objects) != 2 or {o.side for o in self.objects} != set(SIDES):
            raise ValueError("a scene needs exactly one left and one right object")
        if self.width % 2 or self.width < 4 * HALF_EXTENT or self.height < 2 * HALF_EXTENT + 2:
            raise ValueError(f"canvas {self.height}x{self.width} too small")

    def by_side(self, side: str) -> ObjectSpec:
        return next(o for o in self.objects if o.side == side)

    def global_prompt(self) -> tuple[str, ...]:
        return self.by_side("left").tokens() + self.by_side("right").tokens()


def vocabulary() -> list[str]:
    toks = list(SIDES)
    for side in SIDES:
        toks += [f"{side}_{s}" for s in SHAPES]
        toks += [f"{side}_{c}" for c in COLORS]
    return toks


def object_center(side: str, height: int, width: int) -> tuple[float, float]:
    """(row, col) of an object's center in continuous pixel coordinates."""
    col = width / 4 if side == "left" else 3 * width / 4
    return height / 2, col


def object_bbox(side: str, height: int = 64, width: int = 64) -> tuple[int, int, int, int]:
    """Pixel bounding box ``(x0, y0, w, h)`` covering every partially covered pixel."""
    cy, cx = object_center(side, height, width)
    x0 = int(np.floor(cx - HALF_EXTENT))
    y0 = int(np.floor(cy - HALF_EXTENT))
    x1 = int(np.ceil(cx + HALF_EXTENT))
    y1 = int(np.ceil(cy + HALF_EXTENT))
    return x0, y0, x1 - x0, y1 - y0


def _inside(shape: str, dy: np.ndarray, dx: np.ndarray) -> np.ndarray:
    r = HALF_EXTENT
    if shape == "circle":
        return dx**2 + dy**2 <= r**2
    if shape == "square":
        return (np.abs(dx) <= r * 0.85) & (np.abs(dy) <= r * 0.85)
    # upward isosceles triangle: apex at top, base at bottom
    v = (dy + r) / (2 * r)
    return (dy >= -r) & (dy <= r) & (np.abs(dx) <= v * r)


def coverage(shape: str, side: str, height: int, width: int) -> np.ndarray:
    """Anti-aliased coverage in ``[0, 1]`` from ``SUPERSAMPLE**2`` samples per pixel."""
    cy, cx = object_center(side, height, width)
    s = SUPERSAMPLE
    offs = (np.arange(s) + 0.5) / s
    ys = (np.arange(height)[:, None] + offs[None, :]).reshape(-1)
    xs = (np.arange(width)[:, None] + offs[None, :]).reshape(-1)
    hit = _inside(shape, ys[:, None] - cy, xs[None, :] - cx)
    return hit.reshape(height, s, width, s).mean(axis=(1, 3))


def stripe_profile(width: int, phase: int) -> np.ndarray:
    """Per-column brightness factor: 2 px bright, 2 px dark, shifted by ``phase``."""
    cols = (np.arange(width) + phase) % STRIPE_PERIOD
    return np.where(cols < STRIPE_PERIOD // 2, 1.0, STRIPE_DARK)


def render_scene(spec: SceneSpec) -> np.ndarray:
    """Float32 ``(H, W, 3)`` image in ``[0, 1]`` on a mid-gray background."""
    h, w = spec.height, spec.width
    img = np.full((h, w, 3), BACKGROUND, dtype=np.float64)
    for obj in spec.objects:
        cov = coverage(obj.shape, obj.side, h, w)[..., None]
        tex = stripe_profile(w, obj.texture_phase)[None, :, None] * np.asarray(RGB[obj.color])[None, None, :]
        img = img * (1.0 - cov) + tex * cov
    return img.astype(np.float32)


def random_scene(rng: np.random.Generator, height: int = 64, width: int = 64) -> SceneSpec:
    objs = tuple(
        ObjectSpec(
            SHAPES[rng.integers(len(SHAPES))],
            COLORS[rng.integers(len(COLORS))],
            side,
            int(rng.integers(STRIPE_PERIOD)),
        )
        for side in SIDES
    )
    return SceneSpec(objs, height, width)


def sample_dataset_item(rng: np.random.Generator, height: int = 64, width: int = 64):
    """``(image, global_prompt, {side: local_prompt})`` for one uniform random scene."""
    spec = random_scene(rng, height, width)
    local = {o.side: o.tokens() for o in spec.objects}
    return render_scene(spec), spec.global_prompt(), local


def make_dataset(n: int, seed: int, height: int = 64, width: int = 64):
    """``n`` items as a ``(n, H, W, 3)`` array plus their global prompts."""
    rng = np.random.default_rng(seed)
    images = np.empty((n, height, width, 3), dtype=np.float32)
    prompts = []
    for i in range(n):
        images[i], g, _ = sample_dataset_item(rng, height, width)
        prompts.append(g)
    return images, prompts


def parse_global_prompt(prompt) -> SceneSpec:
    """Recover scene geometry from a global prompt (texture phase is not encoded)."""
    found = {}
    for side in SIDES:
        shape = [s for s in SHAPES if f"{side}_{s}" in prompt]
        color = [c for c in COLORS if f"{side}_{c}" in prompt]
        if len(shape) != 1 or len(color) != 1:
            raise ValueError(f"prompt {list(prompt)} does not name one shape and one color for {side}")
        found[side] = ObjectSpec(shape[0], color[0], side)
    return SceneSpec((found["left"], found["right"]))
