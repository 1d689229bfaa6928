"""Proposal recall: per-threshold recall, average recall and budgeted reports.

Each ground truth is matched to its best-overlapping proposal among the
first ``k``; there is no one-to-one assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from treerl.featurizer import Featurizer, GridFeaturizer
from treerl.geometry import DEFAULT_MIN_SIZE, Window
from treerl.mdp import SceneContext
from treerl.qnet import QNetwork
from treerl.scene import Scene, SizeClass, size_class
from treerl.tree_search import propose

SIZE_CLASSES = ("large", "small", "all")


def iou_matrix(proposals: Sequence[Window], gts: Sequence[Window]) -> np.ndarray:
    """``(len(proposals), len(gts))`` IoU array, computed like :func:`geometry.iou`."""
    if not proposals or not gts:
        return np.zeros((len(proposals), len(gts)))
    p = np.array([w.as_tuple() for w in proposals])[:, None, :]
    g = np.array([w.as_tuple() for w in gts])[None, :, :]
    iw = np.minimum(p[..., 2], g[..., 2]) - np.maximum(p[..., 0], g[..., 0])
    ih = np.minimum(p[..., 3], g[..., 3]) - np.maximum(p[..., 1], g[..., 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_p = (p[..., 2] - p[..., 0]) * (p[..., 3] - p[..., 1])
    area_g = (g[..., 2] - g[..., 0]) * (g[..., 3] - g[..., 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(inter > 0, inter / (area_p + area_g - inter), 0.0)
    out = np.minimum(out, 1.0)
    out[np.all(p == g, axis=-1)] = 1.0
    return out


def best_ious(proposals: Sequence[Window], gts: Sequence[Window], k: int) -> np.ndarray:
    """Best IoU of each ground truth against the first ``k`` proposals (0 if none)."""
    m = iou_matrix(list(proposals[:k]), gts)
    if m.shape[0] == 0:
        return np.zeros(len(gts))
    return m.max(axis=0)


def _size_mask(gts: Sequence[Window], size_filter: str | SizeClass | None) -> np.ndarray:
    if size_filter is None or size_filter == "all":
        return np.ones(len(gts), dtype=bool)
    wanted = SizeClass(size_filter)
    return np.array([size_class(g) is wanted for g in gts], dtype=bool)


def _pooled_best(
    proposals: Sequence[Sequence[Window]],
    gts: Sequence[Sequence[Window]],
    k: int,
    size_filter: str | SizeClass | None,
) -> np.ndarray:
    if len(proposals) != len(gts):
        raise ValueError("need one proposal list per scene")
    chunks = [best_ious(p, g, k)[_size_mask(g, size_filter)] for p, g in zip(proposals, gts)]
    return np.concatenate(chunks) if chunks else np.zeros(0)


def recall(
    proposals: Sequence[Sequence[Window]],
    gts: Sequence[Sequence[Window]],
    k: int,
    threshold: float,
    size_filter: str | SizeClass | None = None,
) -> float | None:
    """Fraction of ground truths covered at IoU >= ``threshold`` by the first ``k`` proposals.

    Returns ``None`` when no ground truth survives the size filter.
    """
    best = _pooled_best(proposals, gts, k, size_filter)
    if best.size == 0:
        return None
    return float(np.mean(best >= threshold))


def average_recall(
    proposals: Sequence[Sequence[Window]],
    gts: Sequence[Sequence[Window]],
    k: int,
    size_filter: str | SizeClass | None = None,
) -> float | None:
    """Recall averaged over IoU thresholds in [0.5, 1], in closed form per ground truth."""
    best = _pooled_best(proposals, gts, k, size_filter)
    if best.size == 0:
        return None
    return float(np.mean(np.clip(2.0 * (best - 0.5), 0.0, 1.0)))


@dataclass(frozen=True)
class RecallRow:
    budget: int
    size_class: str
    threshold: float
    recall: float


@dataclass
class RecallReport:
    rows: list[RecallRow] = field(default_factory=list)
    average_recall: dict[tuple[int, str], float] = field(default_factory=dict)
    gt_counts: dict[str, int] = field(default_factory=dict)

    def get(self, budget: int, size: str, threshold: float) -> float | None:
        for row in self.rows:
            if row.budget == budget and row.size_class == size and row.threshold == threshold:
                return row.recall
        return None

    def to_tsv(self) -> str:
        lines = ["budget\tsize_class\tthreshold\trecall"]
        lines.extend(f"{r.budget}\t{r.size_class}\t{r.threshold:g}\t{r.recall:.6f}" for r in self.rows)
        lines.extend(f"{b}\t{s}\tar\t{v:.6f}" for (b, s), v in self.average_recall.items())
        return "\n".join(lines) + "\n"


def evaluate(
    scenes: Sequence[Scene],
    proposals: Mapping[str, Sequence[Window]],
    budgets: Sequence[int],
    thresholds: Sequence[float],
) -> RecallReport:
    """Recall table over ``budgets x size classes x thresholds``.

    Size classes with no ground truths produce no rows.
    """
    props = [list(proposals.get(s.id, ())) for s in scenes]
    gts = [list(s.objects) for s in scenes]
    report = RecallReport()
    for size in SIZE_CLASSES:
        report.gt_counts[size] = int(sum(_size_mask(g, size).sum() for g in gts))
    for budget in budgets:
        for size in SIZE_CLASSES:
            if report.gt_counts[size] == 0:
                continue
            best = _pooled_best(props, gts, budget, size)
            for tau in thresholds:
                report.rows.append(RecallRow(budget, size, float(tau), float(np.mean(best >= tau))))
            report.average_recall[(budget, size)] = float(np.mean(np.clip(2.0 * (best - 0.5), 0.0, 1.0)))
    return report


def recall_curve(
    scenes: Sequence[Scene],
    proposals: Mapping[str, Sequence[Window]],
    budget: int,
    thresholds: Sequence[float],
    size_filter: str | None = None,
) -> list[float]:
    props = [list(proposals.get(s.id, ())) for s in scenes]
    best = _pooled_best(props, [list(s.objects) for s in scenes], budget, size_filter)
    if best.size == 0:
        return []
    return [float(np.mean(best >= t)) for t in thresholds]


def report(
    dataset: Sequence[Scene],
    net: QNetwork,
    levels: Sequence[int],
    thresholds: Sequence[float],
    featurizer: Featurizer | None = None,
    min_size: float = DEFAULT_MIN_SIZE,
) -> RecallReport:
    """Run tree search once at the deepest level and score every budget prefix."""
    featurizer = featurizer or GridFeaturizer()
    depth = max(levels)
    proposals = {}
    for scene in dataset:
        ctx = SceneContext(scene, featurizer, min_size)
        proposals[scene.id] = [p.window for p in propose(ctx, net, depth)]
    budgets = sorted({2**level - 1 for level in levels})
    return evaluate(dataset, proposals, budgets, thresholds)
