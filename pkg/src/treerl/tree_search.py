"""Proposal generation by top-down tree search over the learned Q-values.

Every node spawns two children: one through its best scaling action and
one through its best translation action. Proposals are ranked level by
level, so ``L`` levels give ``2**L - 1`` windows and a deeper tree always
extends a shallower one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from treerl._io import atomic_write_text
from treerl.geometry import TRANSLATION_IDS, Window
from treerl.mdp import HISTORY_LEN, SceneContext, State, initial_state, stack_inputs
from treerl.qnet import QNetwork
from treerl.trainer import N_SCALING, group_argmax

MAX_LEVELS = 10

# given a level's states, return (scaling_action, translation_action) per state
GroupPicker = Callable[[Sequence[State]], list[tuple[int, int]]]


@dataclass(frozen=True)
class Proposal:
    window: Window
    level: int
    node_index: int


def _check_levels(levels: int) -> None:
    if not 1 <= levels <= MAX_LEVELS:
        raise ValueError(f"levels must lie in [1, {MAX_LEVELS}], got {levels}")


def greedy_picker(net: QNetwork) -> GroupPicker:
    def pick(states: Sequence[State]) -> list[tuple[int, int]]:
        q = net.forward(stack_inputs(states))
        return [group_argmax(row) for row in q]

    return pick


def random_picker(rng: np.random.Generator) -> GroupPicker:
    """Uniformly random action within each group; the untrained-policy baseline."""

    def pick(states: Sequence[State]) -> list[tuple[int, int]]:
        return [
            (int(rng.integers(N_SCALING)), int(rng.choice(TRANSLATION_IDS)))
            for _ in states
        ]

    return pick


def expand_tree(ctx: SceneContext, levels: int, pick: GroupPicker) -> list[Proposal]:
    _check_levels(levels)
    level_states = [initial_state(ctx)]
    proposals = [Proposal(level_states[0].window, 1, 0)]
    for level in range(2, levels + 1):
        children = []
        for state, (scale, translate) in zip(level_states, pick(level_states)):
            children.append(ctx.child(state, scale))
            children.append(ctx.child(state, translate))
        base = len(proposals)
        proposals.extend(Proposal(s.window, level, base + i) for i, s in enumerate(children))
        level_states = children
    return proposals


def propose(ctx: SceneContext, net: QNetwork, levels: int) -> list[Proposal]:
    """``2**levels - 1`` proposals, level-ordered, scaling child before translation child."""
    return expand_tree(ctx, levels, greedy_picker(net))


def propose_random(ctx: SceneContext, levels: int, rng: np.random.Generator) -> list[Proposal]:
    return expand_tree(ctx, levels, random_picker(rng))


def propose_single_path(ctx: SceneContext, net: QNetwork, steps: int) -> list[Proposal]:
    """Chain of ``steps + 1`` windows following the single best action each step."""
    if not 0 <= steps <= HISTORY_LEN:
        raise ValueError(f"steps must lie in [0, {HISTORY_LEN}]")
    state = initial_state(ctx)
    proposals = [Proposal(state.window, 1, 0)]
    for k in range(1, steps + 1):
        q = net.forward(state.input_vector())
        state = ctx.child(state, int(np.argmax(q)))
        proposals.append(Proposal(state.window, k + 1, k))
    return proposals


def format_proposals(scene_id: str, proposals: Iterable[Proposal]) -> str:
    lines = []
    for rank, p in enumerate(proposals, start=1):
        coords = "\t".join(repr(float(v)) for v in p.window.as_tuple())
        lines.append(f"{scene_id}\t{rank}\t{p.level}\t{coords}\n")
    return "".join(lines)


def write_proposals(path: str | os.PathLike, by_scene: Iterable[tuple[str, Sequence[Proposal]]]) -> None:
    atomic_write_text(path, "".join(format_proposals(sid, props) for sid, props in by_scene))


class ProposalFileError(ValueError):
    pass


def read_proposals(path: str | os.PathLike) -> dict[str, list[Proposal]]:
    """Proposals per scene id, in rank order."""
    out: dict[str, list[tuple[int, Window, int]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            try:
                if len(fields) != 7:
                    raise ValueError(f"expected 7 fields, got {len(fields)}")
                rank, level = int(fields[1]), int(fields[2])
                window = Window(*map(float, fields[3:]))
            except ValueError as exc:
                raise ProposalFileError(f"{path}:{lineno}: {exc}") from None
            out.setdefault(fields[0], []).append((rank, window, level))
    return {
        sid: [Proposal(w, level, i) for i, (_, w, level) in enumerate(sorted(entries, key=lambda e: e[0]))]
        for sid, entries in out.items()
    }
