"""Deterministic synthetic scenes: grayscale rasters with rectangle objects.

A scene record holds everything needed to re-render its raster, so rasters
are never persisted. Manifests store one scene per line::

    id <TAB> width <TAB> height <TAB> seed <TAB> x0 y0 x1 y1 intensity <TAB> ...
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from treerl._io import atomic_write_text
from treerl.geometry import Window, area

LARGE_OBJECT_AREA = 2000.0
MIN_CONTRAST = 0.3
MAX_NOISE = 0.1


class SizeClass(enum.Enum):
    LARGE = "large"
    SMALL = "small"


def size_class(g: Window) -> SizeClass:
    """Objects strictly larger than 2000 px^2 are large, the rest small."""
    return SizeClass.LARGE if area(g) > LARGE_OBJECT_AREA else SizeClass.SMALL


@dataclass(frozen=True)
class SceneConfig:
    width: int = 128
    height: int = 128
    min_objects: int = 1
    max_objects: int = 5
    min_object_area: float = 64.0
    min_side: int = 8
    max_side_frac: float = 0.6
    background: float = 0.2
    noise: float = 0.1
    intensity_low: float = 0.6
    intensity_high: float = 1.0

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("need 1 <= min_objects <= max_objects")
        if self.min_object_area > self.width * self.height:
            raise ValueError(
                f"min_object_area {self.min_object_area} cannot fit a "
                f"{self.width}x{self.height} image"
            )
        if self.min_side < 1:
            raise ValueError("min_side must be >= 1")
        max_w, max_h = self.max_side(self.width), self.max_side(self.height)
        if max_w < self.min_side or max_h < self.min_side or max_w * max_h < self.min_object_area:
            raise ValueError("object side range cannot hold min_object_area")
        if not 0.0 <= self.noise <= MAX_NOISE:
            raise ValueError(f"noise amplitude must lie in [0, {MAX_NOISE}]")
        if not (0.0 <= self.background - self.noise and self.background + self.noise <= 1.0):
            raise ValueError("background +/- noise must stay within [0, 1]")
        if not 0.0 <= self.intensity_low <= self.intensity_high <= 1.0:
            raise ValueError("need 0 <= intensity_low <= intensity_high <= 1")
        lo_contrast = min(abs(self.intensity_low - self.background), abs(self.intensity_high - self.background))
        if self.intensity_low <= self.background <= self.intensity_high or lo_contrast < MIN_CONTRAST:
            raise ValueError(f"object intensities need contrast >= {MIN_CONTRAST} against background")

    def max_side(self, extent: int) -> int:
        return max(1, min(extent, int(math.floor(self.max_side_frac * extent))))


@dataclass(frozen=True)
class Scene:
    id: str
    width: int
    height: int
    seed: int
    objects: tuple[Window, ...]
    intensities: tuple[float, ...]
    background: float = 0.2
    noise: float = 0.1

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"scene {self.id!r}: non-positive size {self.width}x{self.height}")
        if not self.objects:
            raise ValueError(f"scene {self.id!r} has no objects")
        if len(self.objects) != len(self.intensities):
            raise ValueError(f"scene {self.id!r}: objects/intensities length mismatch")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"scene {self.id!r}: seed outside uint64")
        for g in self.objects:
            if not g.within_image(self.width, self.height):
                raise ValueError(f"scene {self.id!r}: object {g.as_tuple()} out of bounds")

    @property
    def full_window(self) -> Window:
        return Window(0.0, 0.0, float(self.width), float(self.height))


def _make_scene(index: int, scene_seed: int, config: SceneConfig) -> Scene:
    rng = np.random.default_rng(scene_seed)
    n = int(rng.integers(config.min_objects, config.max_objects + 1))
    max_w, max_h = config.max_side(config.width), config.max_side(config.height)
    boxes: list[Window] = []
    intensities: list[float] = []
    while len(boxes) < n:
        bw = int(rng.integers(config.min_side, max_w + 1))
        bh = int(rng.integers(config.min_side, max_h + 1))
        if bw * bh < config.min_object_area:
            continue
        x0 = int(rng.integers(0, config.width - bw + 1))
        y0 = int(rng.integers(0, config.height - bh + 1))
        box = Window(float(x0), float(y0), float(x0 + bw), float(y0 + bh))
        if box in boxes:
            continue
        boxes.append(box)
        intensities.append(float(rng.uniform(config.intensity_low, config.intensity_high)))
    return Scene(
        id=f"scene{index:05d}",
        width=config.width,
        height=config.height,
        seed=scene_seed,
        objects=tuple(boxes),
        intensities=tuple(intensities),
        background=config.background,
        noise=config.noise,
    )


def generate_dataset(count: int, seed: int, config: SceneConfig | None = None) -> list[Scene]:
    """Generate ``count`` scenes; the result depends only on the arguments."""
    config = config or SceneConfig()
    config.validate()
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return []
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [_make_scene(i, int(s), config) for i, s in enumerate(seeds)]


def _pixel_span(lo: float, hi: float, extent: int) -> slice:
    # pixels whose centers fall in [lo, hi)
    start = max(0, math.ceil(lo - 0.5))
    stop = min(extent, math.ceil(hi - 0.5))
    return slice(start, max(start, stop))


def render(scene: Scene) -> np.ndarray:
    """Render the scene to an ``(height, width)`` float array in [0, 1]."""
    # noise comes from a child stream of the scene seed, independent of the layout draws
    noise_rng = np.random.default_rng(np.random.SeedSequence(scene.seed, spawn_key=(1,)))
    raster = scene.background + noise_rng.uniform(-scene.noise, scene.noise, size=(scene.height, scene.width))
    for g, value in zip(scene.objects, scene.intensities):
        raster[_pixel_span(g.y0, g.y1, scene.height), _pixel_span(g.x0, g.x1, scene.width)] = value
    np.clip(raster, 0.0, 1.0, out=raster)
    return raster


def write_pgm(raster: np.ndarray, path: str | os.PathLike, maxval: int = 255) -> None:
    """Export a raster as a plain (P2) PGM file for quick inspection."""
    levels = np.rint(np.clip(raster, 0.0, 1.0) * maxval).astype(int)
    h, w = levels.shape
    lines = ["P2", f"{w} {h}", str(maxval)]
    lines.extend(" ".join(map(str, row)) for row in levels)
    atomic_write_text(path, "\n".join(lines) + "\n")


class ManifestError(ValueError):
    """Raised for malformed or inconsistent manifest files."""


def _fmt(v: float) -> str:
    return repr(float(v))


def format_scene(scene: Scene) -> str:
    fields = [scene.id, str(scene.width), str(scene.height), str(scene.seed)]
    for g, value in zip(scene.objects, scene.intensities):
        fields.append(" ".join(_fmt(v) for v in (*g.as_tuple(), value)))
    return "\t".join(fields)


def parse_scene(line: str, background: float = 0.2, noise: float = 0.1) -> Scene:
    fields = line.rstrip("\n").split("\t")
    if len(fields) < 5:
        raise ValueError("expected id, width, height, seed and at least one object")
    scene_id, width, height, seed = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if width <= 0 or height <= 0:
        raise ValueError(f"non-positive image size {width}x{height}")
    objects, intensities = [], []
    for group in fields[4:]:
        parts = group.split()
        if len(parts) != 5:
            raise ValueError(f"object group {group!r} needs 5 numbers")
        x0, y0, x1, y1, value = map(float, parts)
        objects.append(Window(x0, y0, x1, y1))
        intensities.append(value)
    return Scene(scene_id, width, height, seed, tuple(objects), tuple(intensities), background, noise)


def save_manifest(scenes: Iterable[Scene], path: str | os.PathLike) -> None:
    atomic_write_text(path, "".join(format_scene(s) + "\n" for s in scenes))


def load_manifest(path: str | os.PathLike, config: SceneConfig | None = None) -> list[Scene]:
    """Read a manifest; errors name the offending line."""
    config = config or SceneConfig()
    scenes: list[Scene] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                scene = parse_scene(line, config.background, config.noise)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if scene.id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate scene id {scene.id!r}")
            seen.add(scene.id)
            scenes.append(scene)
    return scenes


def scenes_by_id(scenes: Sequence[Scene]) -> dict[str, Scene]:
    return {s.id: s for s in scenes}
