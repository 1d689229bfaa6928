"""Windows, IoU and the 13 window-transforming actions.

A window is an axis-aligned rectangle in continuous pixel coordinates.
Actions come in two groups: five scaling actions that replace the window
by a sub-window 0.55 times its linear size, and eight local translation
actions that shift or resize it by a quarter of its current extent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

SCALE_FACTOR = 0.55
TRANSLATE_FACTOR = 0.25
DEFAULT_MIN_SIZE = 8.0


@dataclass(frozen=True, slots=True)
class Window:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]`` in pixel units."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate window {self.as_tuple()}")
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"non-finite window {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, other: Window, tol: float = 0.0) -> bool:
        return (
            other.x0 >= self.x0 - tol
            and other.y0 >= self.y0 - tol
            and other.x1 <= self.x1 + tol
            and other.y1 <= self.y1 + tol
        )

    def within_image(self, width: float, height: float) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= width and self.y1 <= height


class ActionGroup(enum.Enum):
    SCALING = "scaling"
    TRANSLATION = "translation"


class Action(enum.IntEnum):
    """The 13 discrete actions; ids 0-4 scale, ids 5-12 translate."""

    SCALE_TOP_LEFT = 0
    SCALE_TOP_RIGHT = 1
    SCALE_BOTTOM_LEFT = 2
    SCALE_BOTTOM_RIGHT = 3
    SCALE_CENTER = 4
    MOVE_LEFT = 5
    MOVE_RIGHT = 6
    MOVE_UP = 7
    MOVE_DOWN = 8
    SHRINK_HORIZONTAL = 9
    GROW_HORIZONTAL = 10
    SHRINK_VERTICAL = 11
    GROW_VERTICAL = 12

    @property
    def group(self) -> ActionGroup:
        return ActionGroup.SCALING if self < 5 else ActionGroup.TRANSLATION


NUM_ACTIONS = len(Action)
SCALING_IDS = tuple(range(0, 5))
TRANSLATION_IDS = tuple(range(5, 13))


def area(w: Window) -> float:
    return (w.x1 - w.x0) * (w.y1 - w.y0)


def intersection_area(a: Window, b: Window) -> float:
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Window, b: Window) -> float:
    """Intersection over union of two windows, 0.0 when they are disjoint."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    if a == b:
        return 1.0
    union = area(a) + area(b) - inter
    return min(1.0, inter / union)


def _fit(lo: float, hi: float, min_size: float, bound_lo: float, bound_hi: float) -> tuple[float, float]:
    """Clip ``[lo, hi]`` to the bounds, then enforce ``min_size`` around its center."""
    lo, hi = max(lo, bound_lo), min(hi, bound_hi)
    size = min(min_size, bound_hi - bound_lo)
    if hi - lo >= size:
        return lo, hi
    mid = 0.5 * (lo + hi)
    lo, hi = mid - 0.5 * size, mid + 0.5 * size
    # slide back inside the bounds without changing the size
    if lo < bound_lo:
        lo, hi = bound_lo, bound_lo + size
    elif hi > bound_hi:
        lo, hi = bound_hi - size, bound_hi
    return lo, hi


def _scale(w: Window, action: Action) -> tuple[float, float, float, float]:
    cw, ch = SCALE_FACTOR * w.width, SCALE_FACTOR * w.height
    if action == Action.SCALE_TOP_LEFT:
        return (w.x0, w.y0, w.x0 + cw, w.y0 + ch)
    if action == Action.SCALE_TOP_RIGHT:
        return (w.x1 - cw, w.y0, w.x1, w.y0 + ch)
    if action == Action.SCALE_BOTTOM_LEFT:
        return (w.x0, w.y1 - ch, w.x0 + cw, w.y1)
    if action == Action.SCALE_BOTTOM_RIGHT:
        return (w.x1 - cw, w.y1 - ch, w.x1, w.y1)
    cx, cy = w.center
    return (cx - 0.5 * cw, cy - 0.5 * ch, cx + 0.5 * cw, cy + 0.5 * ch)


def _translate(w: Window, action: Action) -> tuple[float, float, float, float]:
    dx, dy = TRANSLATE_FACTOR * w.width, TRANSLATE_FACTOR * w.height
    x0, y0, x1, y1 = w.as_tuple()
    if action == Action.MOVE_LEFT:
        return (x0 - dx, y0, x1 - dx, y1)
    if action == Action.MOVE_RIGHT:
        return (x0 + dx, y0, x1 + dx, y1)
    if action == Action.MOVE_UP:
        return (x0, y0 - dy, x1, y1 - dy)
    if action == Action.MOVE_DOWN:
        return (x0, y0 + dy, x1, y1 + dy)
    if action == Action.SHRINK_HORIZONTAL:
        return (x0 + 0.5 * dx, y0, x1 - 0.5 * dx, y1)
    if action == Action.GROW_HORIZONTAL:
        return (x0 - 0.5 * dx, y0, x1 + 0.5 * dx, y1)
    if action == Action.SHRINK_VERTICAL:
        return (x0, y0 + 0.5 * dy, x1, y1 - 0.5 * dy)
    return (x0, y0 - 0.5 * dy, x1, y1 + 0.5 * dy)


def apply_action(
    w: Window,
    action: int,
    width: float,
    height: float,
    min_size: float = DEFAULT_MIN_SIZE,
) -> Window:
    """Apply one of the 13 actions to ``w`` inside a ``width x height`` image.

    Scaling children are confined to ``w``; translated windows are clipped
    to the image. Any dimension that would end up shorter than ``min_size``
    is widened to ``min_size`` about its center (or to the full available
    extent if that is smaller).
    """
    action = Action(action)
    if action.group is ActionGroup.SCALING:
        x0, y0, x1, y1 = _scale(w, action)
        bounds = w.as_tuple()
    else:
        x0, y0, x1, y1 = _translate(w, action)
        bounds = (0.0, 0.0, float(width), float(height))
    x0, x1 = _fit(x0, x1, min_size, bounds[0], bounds[2])
    y0, y1 = _fit(y0, y1, min_size, bounds[1], bounds[3])
    return Window(x0, y0, x1, y1)


def full_window(width: float, height: float) -> Window:
    return Window(0.0, 0.0, float(width), float(height))
