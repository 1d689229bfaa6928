"""The search MDP: states, hit flags, rewards and episode stepping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from treerl.featurizer import Featurizer, GridFeaturizer
from treerl.geometry import DEFAULT_MIN_SIZE, NUM_ACTIONS, Window, apply_action, iou
from treerl.scene import Scene, render

HISTORY_LEN = 50
HIT_IOU = 0.5
FIRST_HIT_REWARD = 5.0

HitFlags = tuple[int, ...]


class EpisodeError(RuntimeError):
    """Misuse of an episode, e.g. stepping past the horizon."""


@dataclass(frozen=True, eq=False)
class State:
    window: Window
    window_feature: np.ndarray
    global_feature: np.ndarray
    history: tuple[int, ...] = ()

    @property
    def step(self) -> int:
        return len(self.history)

    def history_matrix(self) -> np.ndarray:
        hist = np.zeros((HISTORY_LEN, NUM_ACTIONS))
        if self.history:
            hist[np.arange(len(self.history)), self.history] = 1.0
        return hist

    def input_vector(self) -> np.ndarray:
        return np.concatenate([self.window_feature, self.global_feature, self.history_matrix().ravel()])


def input_dim(feature_dim: int) -> int:
    return 2 * feature_dim + HISTORY_LEN * NUM_ACTIONS


def stack_inputs(states: Sequence[State]) -> np.ndarray:
    """Network inputs for many states as one ``(len(states), input_dim)`` array."""
    f = states[0].window_feature.shape[0]
    out = np.zeros((len(states), input_dim(f)))
    for i, s in enumerate(states):
        out[i, :f] = s.window_feature
        out[i, f : 2 * f] = s.global_feature
        if s.history:
            out[i, 2 * f + NUM_ACTIONS * np.arange(len(s.history)) + np.asarray(s.history)] = 1.0
    return out


def history_actions(history_flat: np.ndarray) -> list[int]:
    """Recover the action sequence from a flattened history matrix."""
    hist = np.asarray(history_flat).reshape(HISTORY_LEN, NUM_ACTIONS)
    actions = []
    for row in hist:
        if not row.any():
            break
        actions.append(int(np.argmax(row)))
    return actions


@dataclass(frozen=True)
class Transition:
    state: State
    action: int
    reward: float
    next_state: State
    terminal: bool


@dataclass
class SceneContext:
    """A scene with its raster and global feature computed once per episode source."""

    scene: Scene
    featurizer: Featurizer = field(default_factory=GridFeaturizer)
    min_size: float = DEFAULT_MIN_SIZE
    raster: np.ndarray = field(init=False, repr=False)
    global_feature: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.raster = render(self.scene)
        self.global_feature = self.featurizer.extract_global(self.raster)
        self.global_feature.flags.writeable = False

    def state_for(self, window: Window, history: tuple[int, ...]) -> State:
        feat = self.featurizer.extract(self.raster, window)
        return State(window, feat, self.global_feature, history)

    def child(self, state: State, action: int) -> State:
        scene = self.scene
        w = apply_action(state.window, action, scene.width, scene.height, self.min_size)
        return self.state_for(w, state.history + (int(action),))


def initial_state(ctx: SceneContext) -> State:
    """The whole image with an empty history."""
    root = ctx.scene.full_window
    return State(root, ctx.global_feature, ctx.global_feature, ())


def initial_flags(gts: Sequence[Window], root: Window) -> HitFlags:
    """Hit flags before the first action; the root window counts as attended."""
    if not gts:
        raise EpisodeError("episode needs at least one ground-truth object")
    return tuple(1 if iou(root, g) > HIT_IOU else -1 for g in gts)


def sign_reward(w: Window, w_next: Window, gts: Sequence[Window]) -> float:
    """+1 if some object's IoU strictly improves, otherwise -1 (ties count as -1)."""
    if not gts:
        raise EpisodeError("reward needs at least one ground-truth object")
    for g in gts:
        if iou(w_next, g) > iou(w, g):
            return 1.0
    return -1.0


def reward(w: Window, w_next: Window, gts: Sequence[Window], flags: HitFlags) -> tuple[float, HitFlags]:
    """Reward for moving from ``w`` to ``w_next`` with the first-hit bonus.

    Returns the reward and the updated flags. Any object whose IoU with
    ``w_next`` exceeds 0.5 for the first time earns a single +5, regardless
    of how many objects flip at once.
    """
    new_flags = tuple(1 if f == 1 or iou(w_next, g) > HIT_IOU else -1 for f, g in zip(flags, gts))
    if any(after > before for before, after in zip(flags, new_flags)):
        return FIRST_HIT_REWARD, new_flags
    return sign_reward(w, w_next, gts), new_flags


def step(
    state: State,
    action: int,
    ctx: SceneContext,
    flags: HitFlags,
    max_steps: int = HISTORY_LEN,
) -> tuple[State, float, HitFlags, bool]:
    """Take ``action``; returns ``(next_state, reward, flags, terminal)``."""
    if max_steps > HISTORY_LEN:
        raise EpisodeError(f"max_steps {max_steps} exceeds history length {HISTORY_LEN}")
    if state.step >= max_steps:
        raise EpisodeError(f"cannot step a terminal state (step {state.step} of {max_steps})")
    nxt = ctx.child(state, action)
    r, flags = reward(state.window, nxt.window, ctx.scene.objects, flags)
    return nxt, r, flags, nxt.step == max_steps
