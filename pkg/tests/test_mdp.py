import numpy as np
import pytest

from treerl.featurizer import GridFeaturizer
from treerl.geometry import NUM_ACTIONS, Window
from treerl.mdp import (
    HISTORY_LEN,
    EpisodeError,
    SceneContext,
    history_actions,
    initial_flags,
    initial_state,
    input_dim,
    reward,
    sign_reward,
    stack_inputs,
    step,
)
from treerl.scene import Scene, generate_dataset


def oracle_reward(w, w_next, gts, flags):
    """Reward rule written out longhand, with its own IoU. IoU ties count as -1."""

    def overlap(a, b):
        ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
        iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
        inter = ix * iy
        union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
        return inter / union

    a, b = w.as_tuple(), w_next.as_tuple()
    f_next = [1 if (f == 1 or overlap(b, g.as_tuple()) > 0.5) else -1 for f, g in zip(flags, gts)]
    if max(fn - f for fn, f in zip(f_next, flags)) > 0:
        return 5.0, tuple(f_next)
    r = max(np.sign(overlap(b, g.as_tuple()) - overlap(a, g.as_tuple())) for g in gts)
    return (1.0 if r > 0 else -1.0), tuple(f_next)


def random_window(rng, extent=64.0):
    x = np.sort(rng.uniform(0, extent, 2))
    y = np.sort(rng.uniform(0, extent, 2))
    if x[1] - x[0] < 1e-6 or y[1] - y[0] < 1e-6:
        return Window(0, 0, extent, extent)
    return Window(x[0], y[0], x[1], y[1])


@pytest.fixture(scope="module")
def ctx():
    return SceneContext(generate_dataset(1, 21)[0])


class TestSignReward:
    def test_improvement(self):
        g = Window(0, 0, 10, 10)
        w = Window(0, 0, 10, 30)  # IoU 1/3
        w2 = Window(0, 0, 10, 20)  # IoU 1/2
        assert sign_reward(w, w2, [g]) == 1.0

    def test_all_decrease(self):
        gts = [Window(0, 0, 10, 10), Window(20, 20, 30, 30)]
        w, w2 = Window(0, 0, 30, 30), Window(0, 0, 40, 40)
        assert sign_reward(w, w2, gts) == -1.0

    def test_no_change_is_negative(self):
        w = Window(0, 0, 10, 10)
        assert sign_reward(w, w, [Window(5, 5, 15, 15)]) == -1.0

    def test_needs_objects(self):
        with pytest.raises(EpisodeError):
            sign_reward(Window(0, 0, 1, 1), Window(0, 0, 2, 2), [])


class TestReward:
    def test_first_hit(self):
        g = Window(0, 0, 10, 10)
        r, flags = reward(Window(0, 0, 30, 30), Window(0, 0, 12, 12), [g], (-1,))
        assert r == 5.0 and flags == (1,)

    def test_no_second_bonus(self):
        g = Window(0, 0, 10, 10)
        # IoU 0.6 -> 0.7 on an already-hit object
        w = Window(0, 0, 10, 10 / 0.6)
        w2 = Window(0, 0, 10, 10 / 0.7)
        r, flags = reward(w, w2, [g], (1,))
        assert r == 1.0 and flags == (1,)

    def test_hit_takes_precedence(self):
        g1, g2 = Window(0, 0, 10, 10), Window(50, 50, 60, 60)
        w = Window(0, 0, 60, 60)
        w2 = Window(0, 0, 11, 11)
        r, flags = reward(w, w2, [g1, g2], (-1, -1))
        assert r == 5.0 and flags == (1, -1)

    def test_simultaneous_hits_give_single_bonus(self):
        g1, g2 = Window(0, 0, 10, 10), Window(0, 0, 10, 11)
        r, flags = reward(Window(0, 0, 60, 60), Window(0, 0, 10, 10), [g1, g2], (-1, -1))
        assert r == 5.0 and flags == (1, 1)

    def test_reduces_to_sign_reward_when_all_hit(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            gts = [random_window(rng) for _ in range(rng.integers(1, 4))]
            w, w2 = random_window(rng), random_window(rng)
            r, _ = reward(w, w2, gts, (1,) * len(gts))
            assert r == sign_reward(w, w2, gts)

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            gts = [random_window(rng) for _ in range(rng.integers(1, 5))]
            flags = tuple(int(v) for v in rng.choice([-1, 1], size=len(gts)))
            w, w2 = random_window(rng), random_window(rng)
            assert reward(w, w2, gts, flags) == oracle_reward(w, w2, gts, flags)


class TestStates:
    def test_initial_state(self, ctx):
        s = initial_state(ctx)
        assert s.window.as_tuple() == (0, 0, ctx.scene.width, ctx.scene.height)
        assert s.history_matrix().sum() == 0
        assert np.array_equal(s.window_feature, s.global_feature)
        assert s.input_vector().shape == (input_dim(GridFeaturizer().dim),)
        assert input_dim(128) == 2 * 128 + 650

    def test_step_sets_one_history_bit(self, ctx):
        s = initial_state(ctx)
        flags = initial_flags(ctx.scene.objects, s.window)
        for t, a in enumerate([4, 6, 0, 12]):
            nxt, r, flags, terminal = step(s, a, ctx, flags)
            diff = nxt.history_matrix() - s.history_matrix()
            assert diff.sum() == 1 and diff[t, a] == 1
            assert r in (-1.0, 1.0, 5.0)
            assert not terminal
            s = nxt

    def test_terminal_at_horizon(self, ctx):
        s = initial_state(ctx)
        flags = initial_flags(ctx.scene.objects, s.window)
        rng = np.random.default_rng(2)
        for t in range(HISTORY_LEN):
            s, r, flags, terminal = step(s, int(rng.integers(NUM_ACTIONS)), ctx, flags)
            assert terminal == (t == HISTORY_LEN - 1)
        with pytest.raises(EpisodeError):
            step(s, 0, ctx, flags)

    def test_short_horizon(self, ctx):
        s = initial_state(ctx)
        flags = initial_flags(ctx.scene.objects, s.window)
        s, _, flags, terminal = step(s, 0, ctx, flags, max_steps=2)
        assert not terminal
        s, _, flags, terminal = step(s, 0, ctx, flags, max_steps=2)
        assert terminal

    def test_history_round_trip(self, ctx):
        rng = np.random.default_rng(3)
        s = initial_state(ctx)
        flags = initial_flags(ctx.scene.objects, s.window)
        actions = [int(a) for a in rng.integers(NUM_ACTIONS, size=37)]
        for a in actions:
            s, _, flags, _ = step(s, a, ctx, flags)
        hist = s.history_matrix()
        assert set(np.unique(hist.sum(axis=1))) <= {0.0, 1.0}
        assert hist[37:].sum() == 0
        f = s.window_feature.shape[0]
        assert history_actions(s.input_vector()[2 * f :]) == actions

    def test_stack_inputs_matches_input_vector(self, ctx):
        s0 = initial_state(ctx)
        s1 = ctx.child(s0, 3)
        s2 = ctx.child(s1, 9)
        stacked = stack_inputs([s0, s1, s2])
        for row, s in zip(stacked, (s0, s1, s2)):
            assert np.array_equal(row, s.input_vector())

    def test_rewards_codomain_over_random_episodes(self):
        rng = np.random.default_rng(4)
        seen = set()
        for scene in generate_dataset(20, 5):
            c = SceneContext(scene)
            s = initial_state(c)
            flags = initial_flags(scene.objects, s.window)
            for _ in range(HISTORY_LEN):
                s, r, flags, _ = step(s, int(rng.integers(NUM_ACTIONS)), c, flags)
                seen.add(r)
        assert seen <= {-1.0, 1.0, 5.0}


def test_initial_flags_count_root_hits():
    big = Window(0, 0, 60, 60)
    assert initial_flags([big, Window(0, 0, 5, 5)], Window(0, 0, 64, 64)) == (1, -1)
    with pytest.raises(EpisodeError):
        initial_flags([], Window(0, 0, 64, 64))


def test_scene_without_objects_rejected():
    with pytest.raises(ValueError):
        Scene("empty", 64, 64, 0, (), ())
