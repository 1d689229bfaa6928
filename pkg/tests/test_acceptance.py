"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary.
"""

import time

import numpy as np
import pytest

from treerl.cli import main as cli_main
from treerl.evaluator import recall
from treerl.featurizer import GridFeaturizer
from treerl.geometry import NUM_ACTIONS, Action, Window, apply_action, iou
from treerl.mdp import SceneContext, initial_flags, initial_state, reward, step
from treerl.qnet import QNetwork, default_dims, grad_check
from treerl.replay import ReplayMemory
from treerl.scene import generate_dataset
from treerl.trainer import TrainConfig, epsilon_at, group_argmax, select_training_action, train
from treerl.tree_search import propose, propose_random, propose_single_path

RESULTS: list[str] = []

TRAIN_SEED, TEST_SEED = 2017, 2018


def record(number, name, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# independent oracles ---------------------------------------------------------


def pixel_iou(a, b, extent=64):
    ma = np.zeros((extent, extent), dtype=bool)
    mb = np.zeros((extent, extent), dtype=bool)
    ma[int(a[1]) : int(a[3]), int(a[0]) : int(a[2])] = True
    mb[int(b[1]) : int(b[3]), int(b[0]) : int(b[2])] = True
    return (ma & mb).sum() / (ma | mb).sum()


def overlap(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    return inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)


def oracle_reward(a, b, gts, flags):
    """Straight-line reward rule on plain tuples. Equal IoU counts as no improvement."""
    new_flags = tuple(1 if f == 1 or overlap(b, g) > 0.5 else -1 for f, g in zip(flags, gts))
    if any(f == -1 and n == 1 for f, n in zip(flags, new_flags)):
        return 5.0, new_flags
    improved = any(overlap(b, g) > overlap(a, g) for g in gts)
    return (1.0 if improved else -1.0), new_flags


def int_window(rng, extent=64):
    x = np.sort(rng.choice(extent + 1, 2, replace=False))
    y = np.sort(rng.choice(extent + 1, 2, replace=False))
    return Window(float(x[0]), float(y[0]), float(x[1]), float(y[1]))


def float_window(rng, extent=128.0):
    while True:
        x = np.sort(rng.uniform(0, extent, 2))
        y = np.sort(rng.uniform(0, extent, 2))
        if x[1] - x[0] > 1e-6 and y[1] - y[0] > 1e-6:
            return Window(x[0], y[0], x[1], y[1])


def small_window(rng, extent=128.0):
    side = rng.uniform(8, 24, 2)
    x0, y0 = rng.uniform(0, extent - side)
    return Window(x0, y0, x0 + side[0], y0 + side[1])


def around(rng, g, extent=128.0):
    pad = rng.uniform(0, g.width, 4)
    return Window(max(0.0, g.x0 - pad[0]), max(0.0, g.y0 - pad[1]),
                  min(extent, g.x1 + pad[2]), min(extent, g.y1 + pad[3]))


# criteria --------------------------------------------------------------------


def test_c01_iou_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    n = 10_000
    for _ in range(n):
        a, b = int_window(rng), int_window(rng)
        worst = max(worst, abs(iou(a, b) - pixel_iou(a.as_tuple(), b.as_tuple())))
    elapsed = time.perf_counter() - start
    record(1, "IoU vs pixel oracle", worst <= 1e-9 and elapsed < 10,
           f"{n} pairs, max |err| {worst:.2e}, {elapsed:.1f}s")


def test_c02_reward_oracle():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    mismatches = 0
    seen = set()
    n = 10_000
    for i in range(n):
        gts = [float_window(rng) if i % 2 else small_window(rng) for _ in range(int(rng.integers(1, 6)))]
        flags = tuple(int(v) for v in rng.choice([-1, 1], size=len(gts)))
        # every third case starts close around an object so scaling steps can hit it
        w = around(rng, gts[0]) if i % 3 == 0 else float_window(rng)
        action = Action(int(rng.integers(NUM_ACTIONS)))
        w2 = apply_action(w, action, 128, 128)
        got = reward(w, w2, gts, flags)
        want = oracle_reward(w.as_tuple(), w2.as_tuple(), [g.as_tuple() for g in gts], flags)
        mismatches += got != want
        seen.add(got[0])
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and seen == {-1.0, 1.0, 5.0} and elapsed < 30
    record(2, "reward vs oracle", ok, f"{n} cases, {mismatches} mismatches, codomain {sorted(seen)}, {elapsed:.1f}s")


def test_c03_first_hit_unique():
    rng = np.random.default_rng(3)
    scenes = generate_dataset(50, 3)
    featurizer = GridFeaturizer()
    violations = bonuses = 0
    for episode in range(1000):
        scene = scenes[episode % len(scenes)]
        ctx = SceneContext(scene, featurizer)
        s = initial_state(ctx)
        flags = initial_flags(scene.objects, s.window)
        fired = [f == 1 for f in flags]
        for _ in range(50):
            s, r, new_flags, _ = step(s, int(rng.integers(NUM_ACTIONS)), ctx, flags)
            flipped = [i for i, (a, b) in enumerate(zip(flags, new_flags)) if a == -1 and b == 1]
            regressed = any(a == 1 and b == -1 for a, b in zip(flags, new_flags))
            if r == 5.0:
                bonuses += 1
                if not flipped or any(fired[i] for i in flipped):
                    violations += 1
            elif flipped:
                violations += 1
            violations += regressed
            for i in flipped:
                fired[i] = True
            flags = new_flags
    record(3, "first-hit uniqueness", violations == 0, f"1000 episodes, {bonuses} bonuses, {violations} violations")


def test_c04_gradient_check():
    rng = np.random.default_rng(4)
    errors = []
    for _ in range(12):
        f = int(rng.integers(2, 6))
        hidden = tuple(int(h) for h in rng.integers(3, 9, size=int(rng.integers(1, 3))))
        net = QNetwork.create(default_dims(f, hidden), rng)
        for b in net.biases:
            b[:] = rng.normal(0, 0.1, size=b.shape)
        x = rng.random(net.input_dim)
        errors.append(grad_check(net, x, int(rng.integers(NUM_ACTIONS)), h=1e-5))
    record(4, "gradient check", max(errors) < 1e-4, f"{len(errors)} nets, max rel err {max(errors):.2e}")


def test_c05_tree_structure():
    scenes = generate_dataset(10, 5)
    net = QNetwork.create(default_dims(GridFeaturizer().dim), np.random.default_rng(5))
    problems = []
    recalls = []
    deepest = {}
    for scene in scenes:
        deepest[scene.id] = propose(SceneContext(scene), net, 8)
    for levels in range(1, 9):
        per_scene = []
        for scene in scenes:
            props = propose(SceneContext(scene), net, levels)
            if len(props) != 2**levels - 1:
                problems.append(f"L={levels} count {len(props)}")
            if [p.level for p in props] != sorted(p.level for p in props):
                problems.append(f"L={levels} not level-ordered")
            if props != deepest[scene.id][: len(props)]:
                problems.append(f"L={levels} not a prefix")
            per_scene.append([p.window for p in props])
        recalls.append(recall(per_scene, [list(s.objects) for s in scenes], 2**levels - 1, 0.5))
    if any(b < a for a, b in zip(recalls, recalls[1:])):
        problems.append("recall decreased with depth")
    record(5, "tree structure", not problems,
           "; ".join(problems) or f"L=1..8 ok, recall@0.5 by L {[round(r, 3) for r in recalls]}")


def test_c06_behavior_policy():
    rng = np.random.default_rng(6)
    q = rng.normal(size=NUM_ACTIONS)
    best = group_argmax(q)
    n = 100_000
    greedy = np.array([select_training_action(q, 0.0, rng) for _ in range(n)])
    outside = int(np.sum(~np.isin(greedy, best)))
    shares = [float(np.mean(greedy == a)) for a in best]
    explore = np.array([select_training_action(q, 1.0, rng) for _ in range(n)])
    rel = np.bincount(explore, minlength=NUM_ACTIONS) / n * NUM_ACTIONS - 1
    ok = outside == 0 and all(abs(s - 0.5) <= 0.02 for s in shares) and np.all(np.abs(rel) <= 0.10)
    record(6, "behavior policy", ok,
           f"eps=0 shares {[round(s, 4) for s in shares]} ({outside} outside), eps=1 max rel dev {np.abs(rel).max():.3f}")


def test_c07_epsilon_schedule():
    cfg = TrainConfig()
    phase = cfg.anneal_epochs * 500 * cfg.max_steps
    points = [0, phase // 4, phase // 2, 3 * phase // 4]
    vals = [epsilon_at(s, phase, cfg) for s in points]
    slopes = [(vals[i + 1] - vals[i]) / (points[i + 1] - points[i]) for i in range(3)]
    collinear = max(slopes) - min(slopes) < 1e-15
    after = [epsilon_at(s, phase, cfg) for s in (phase, phase + 1, 25 * 500 * cfg.max_steps)]
    ok = vals[0] == 1.0 and all(v == 0.1 for v in after) and collinear
    record(7, "epsilon schedule", ok, f"start {vals[0]}, at/after end {after}, slopes {slopes[0]:.3e}")


@pytest.fixture(scope="module")
def trained():
    train_set = generate_dataset(500, TRAIN_SEED)
    test_set = generate_dataset(100, TEST_SEED)
    start = time.perf_counter()
    result = train(train_set, TrainConfig())
    elapsed = time.perf_counter() - start
    return result.net, test_set, elapsed


def test_c08_training_efficacy(trained):
    net, test_set, elapsed = trained
    ctxs = [SceneContext(s) for s in test_set]
    gts = [list(s.objects) for s in test_set]
    tree = [[p.window for p in propose(c, net, 5)] for c in ctxs]
    rng = np.random.default_rng(0)
    rand = [[p.window for p in propose_random(c, 5, rng)] for c in ctxs]
    r_tree = recall(tree, gts, 31, 0.5)
    r_rand = recall(rand, gts, 31, 0.5)
    r_large = recall(tree, gts, 31, 0.5, "large")
    r_small = recall(tree, gts, 31, 0.5, "small")
    ok = r_tree - r_rand >= 0.20 and r_large > r_small and elapsed < 1800
    record(8, "training efficacy", ok,
           f"tree {r_tree:.3f} vs random {r_rand:.3f} (+{100 * (r_tree - r_rand):.1f}pp), "
           f"large {r_large:.3f} small {r_small:.3f}, train {elapsed:.0f}s")


def test_c09_tree_vs_single_path(trained):
    net, test_set, _ = trained
    ctxs = [SceneContext(s) for s in test_set]
    gts = [list(s.objects) for s in test_set]
    tree = [[p.window for p in propose(c, net, 6)] for c in ctxs]
    single = [[p.window for p in propose_single_path(c, net, 50)] for c in ctxs]
    r_tree = recall(tree, gts, 63, 0.5)
    r_single = recall(single, gts, 51, 0.5)
    record(9, "tree vs single path", r_tree >= r_single, f"tree@63 {r_tree:.3f}, single@50 steps {r_single:.3f}")


def test_c10_cli_determinism(tmp_path):
    def pipeline(d):
        d.mkdir()
        small = ["--epochs", "2", "--anneal-epochs", "1", "--hidden", "32", "16", "--grid", "4"]
        codes = [
            cli_main(["gen-scenes", "--count", "8", "--seed", "10", "--out", str(d / "m.tsv")]),
            cli_main(["train", "--manifest", str(d / "m.tsv"), "--out", str(d / "q.bin"), "--seed", "11", *small]),
            cli_main(["propose", "--manifest", str(d / "m.tsv"), "--checkpoint", str(d / "q.bin"),
                      "--grid", "4", "--levels", "5", "--out", str(d / "p.tsv")]),
        ]
        return codes, [(d / n).read_bytes() for n in ("m.tsv", "q.bin", "p.tsv")]

    codes_a, files_a = pipeline(tmp_path / "a")
    codes_b, files_b = pipeline(tmp_path / "b")
    same = [a == b for a, b in zip(files_a, files_b)]
    ok = codes_a == codes_b == [0, 0, 0] and all(same)
    record(10, "CLI determinism", ok, f"exit codes {codes_a}, identical manifest/checkpoint/proposals {same}")


def test_c11_replay_memory():
    capacity, extra = 100, 17
    mem = ReplayMemory(capacity, np.random.default_rng(11))
    for i in range(capacity + extra):
        mem.push(i)
    fifo = list(mem) == list(range(extra, capacity + extra))
    small = ReplayMemory(10, np.random.default_rng(12))
    for i in range(10):
        small.push(i)
    counts = np.bincount(small.sample(100_000), minlength=10)
    dev = float(np.abs(counts / 10_000 - 1).max())
    record(11, "replay memory", fifo and dev <= 0.10, f"FIFO after {capacity}+{extra} pushes {fifo}, max rel dev {dev:.3f}")
