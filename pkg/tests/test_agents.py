from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from ehrl.agents.combinadic import action_decode, action_encode, indicator_table, subset_table
from ehrl.agents.dqn import ActionSpace, AgentParams, dqn_target, dqn_update, td_targets
from ehrl.agents.exploration import EpsilonSchedule, epsilon_greedy_select, greedy, top_k
from ehrl.agents.features import access_state, control_input, scale_gains
from ehrl.agents.joint import JointAgent, JointParams, joint_forward, joint_reward, joint_update
from ehrl.agents.predictor import HistoryWindow, history_update, predict_batteries, td0_update, to_batteries
from ehrl.agents.replay import ReplayBuffer, Transition, replay_push, replay_sample
from ehrl.nn import NetworkParams, network_forward, weight_init

# ---------------------------------------------------------------------------
# combinadic


def test_combinadic_examples():
    assert [action_encode([i], 3, 1) for i in range(3)] == [0, 1, 2]
    assert action_encode({0, 1}, 4, 2) == 0
    assert action_encode({2, 3}, 4, 2) == 5
    assert action_decode(5, 4, 2) == (2, 3)


@given(st.integers(1, 9), st.data())
def test_combinadic_matches_lexicographic_enumeration(n, data):
    k = data.draw(st.integers(1, n))
    for rank, subset in enumerate(combinations(range(n), k)):
        assert action_encode(subset, n, k) == rank
        assert action_decode(rank, n, k) == subset


def test_combinadic_errors():
    with pytest.raises(IndexError):
        action_decode(6, 4, 2)
    with pytest.raises(ValueError):
        action_encode([1, 1], 4, 2)
    with pytest.raises(ValueError):
        action_encode([0, 4], 4, 2)
    with pytest.raises(ValueError):
        subset_table(30, 4)  # C(30, 4) = 27405 > 4096


def test_indicator_table_rows():
    ind = indicator_table(5, 2)
    assert ind.shape == (10, 5) and np.all(ind.sum(axis=1) == 2)
    assert ind[action_encode([1, 4], 5, 2)].tolist() == [0, 1, 0, 0, 1]

# ---------------------------------------------------------------------------
# exploration


def test_epsilon_zero_picks_argmax(rng):
    assert all(epsilon_greedy_select([1, 3, 2], 0.0, rng) == 1 for _ in range(100))
    assert greedy([2.0, 5.0, 5.0, 1.0]) == 1


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_greedy_invariant_to_positive_affine_maps(q, scale, shift):
    q = np.array(q)
    base = epsilon_greedy_select(q, 0.0, np.random.default_rng(0))
    assert q[base] == q.max()
    assert epsilon_greedy_select(q * scale, 0.0, np.random.default_rng(0)) == base
    shifted = epsilon_greedy_select(q + shift, 0.0, np.random.default_rng(0))
    # adding a constant can only merge values through rounding, never reorder them
    assert shifted == base or (q + shift)[shifted] == (q + shift)[base]


def test_epsilon_one_uniform(rng):
    q = np.array([5.0, -1.0, 2.0, 0.0])
    counts = np.bincount([epsilon_greedy_select(q, 1.0, rng) for _ in range(100_000)], minlength=4)
    assert chisquare(counts).pvalue > 0.01


def test_replay_sampling_uniform(rng):
    buf = ReplayBuffer(10)
    for i in range(10):
        buf.push(i)
    counts = np.bincount(replay_sample(buf, 100_000, rng), minlength=10)
    assert chisquare(counts).pvalue > 0.01


def test_epsilon_errors(rng):
    with pytest.raises(ValueError):
        epsilon_greedy_select([], 0.1, rng)
    with pytest.raises(ValueError):
        epsilon_greedy_select([1.0], 1.5, rng)


def test_epsilon_schedule():
    s = EpsilonSchedule(1.0, 0.05, 100)
    assert s(0) == 1.0
    assert s(50) == pytest.approx(0.525)
    assert s(100) == s(10_000) == 0.05
    with pytest.raises(ValueError):
        EpsilonSchedule(0.1, 0.5, 10)


def test_top_k_ties_to_lower_index():
    assert top_k([1.0, 3.0, 3.0, 3.0], 2).tolist() == [1, 2]

# ---------------------------------------------------------------------------
# replay


def test_replay_fifo_example():
    buf = ReplayBuffer(2)
    for item in "abc":
        replay_push(buf, item)
    assert list(buf) == ["b", "c"]


@given(st.integers(1, 20), st.lists(st.integers(), max_size=60))
def test_replay_fifo_property(capacity, items):
    buf = ReplayBuffer(capacity)
    for x in items:
        buf.push(x)
        assert len(buf) <= capacity
    assert list(buf) == items[-capacity:]


def test_replay_sample(rng):
    buf = ReplayBuffer(5)
    with pytest.raises(IndexError):
        replay_sample(buf, 1, rng)
    buf.push("only")
    assert replay_sample(buf, 16, rng) == ["only"] * 16

# ---------------------------------------------------------------------------
# features


def test_scale_gains_range():
    assert scale_gains([1e-14, 1e-10, 1e-6]).tolist() == [-1.0, 0.0, 1.0]
    assert scale_gains([1e-20, 1.0]).tolist() == [-1.0, 1.0]
    s = access_state([0, 5], [1e-10, 1e-10], 5)
    assert s.shape == (1, 4) and s.tolist() == [[0.0, 1.0, 0.0, 0.0]]
    assert control_input([[0.5]], [[0.1]]).shape == (1, 1, 2)

# ---------------------------------------------------------------------------
# DQN


def test_dqn_target_examples():
    assert dqn_target(3.0, 0.9, [100.0], True) == 3.0
    assert dqn_target(1.0, 0.99, [4.0, 10.0, -2.0], False) == pytest.approx(10.9)
    assert dqn_target(1.5, 0.0, [7.0], False) == 1.5
    np.testing.assert_allclose(td_targets([1, 2], 0.5, [4, 4], [False, True]), [3.0, 2.0])


def test_action_space_modes(rng):
    enum = ActionSpace(5, 2)
    assert enum.n_outputs == 10
    q = np.zeros(10)
    q[action_encode([1, 3], 5, 2)] = 1.0
    assert enum.greedy(q) == (1, 3)
    fact = ActionSpace(5, 2, "factorized")
    scores = np.array([0.1, 0.9, -1.0, 0.5, 0.2])
    assert fact.greedy(scores) == (1, 3)
    assert fact.max_q(scores)[0] == pytest.approx(1.4)
    assert fact.mask([(0, 4)]).tolist() == [[1, 0, 0, 0, 1]]
    for space in (enum, fact):
        for _ in range(20):
            a = space.random(rng)
            assert len(set(a)) == 2 and all(0 <= i < 5 for i in a)


def _batch(states, actions, rewards, terminal=True):
    return [Transition(s, a, r, s, terminal) for s, a, r in zip(states, actions, rewards)]


def test_dqn_update_zero_error_is_noop(rng):
    space = ActionSpace(4, 2)
    agent = AgentParams.create(weight_init(8, 6, space.n_outputs, rng))
    states = [rng.normal(size=(1, 8)) for _ in range(5)]
    actions = [space.random(rng) for _ in range(5)]
    q = network_forward(np.stack(states), agent.online)
    rewards = [q[i, space.index(a)] for i, a in enumerate(actions)]
    before = [x.copy() for x in agent.online.arrays()]
    loss = dqn_update(_batch(states, actions, rewards), agent, 0.5, 0.9, space)
    assert loss == 0.0
    assert all(np.array_equal(u, v) for u, v in zip(before, agent.online.arrays()))


def test_dqn_update_single_loss():
    space = ActionSpace(3, 1)
    p = NetworkParams(np.zeros((4 + 2, 8)), np.zeros(8), np.zeros((2, 3)), np.ones(3))
    agent = AgentParams.create(p)
    assert dqn_update(_batch([np.ones((1, 4))], [(0,)], [2.0]), agent, 0.0, 0.9, space) == 1.0


def test_dqn_update_moves_towards_target(rng):
    space = ActionSpace(4, 2, "factorized")
    agent = AgentParams.create(weight_init(8, 6, 4, rng))
    batch = _batch([rng.normal(size=(1, 8)) for _ in range(4)], [(0, 1), (2, 3), (0, 3), (1, 2)], [1.0] * 4)
    losses = [dqn_update(batch, agent, 0.05, 0.9, space) for _ in range(30)]
    assert losses[-1] < losses[0]


def test_target_network_sync(rng):
    space = ActionSpace(4, 2)
    agent = AgentParams.create(weight_init(8, 6, space.n_outputs, rng), sync_period=3)
    nxt = rng.normal(size=(1, 8))
    target0 = network_forward(nxt, agent.target).copy()
    batch = [Transition(rng.normal(size=(1, 8)), (0, 1), 5.0, nxt, False)]
    for step in range(1, 7):
        dqn_update(batch, agent, 0.1, 0.9, space)
        same = all(np.array_equal(u, v) for u, v in zip(agent.online.arrays(), agent.target.arrays()))
        assert same == (step % 3 == 0)
        if step < 3:
            # between syncs the bootstrapped target does not see online updates
            assert np.array_equal(network_forward(nxt, agent.target), target0)

# ---------------------------------------------------------------------------
# battery prediction


def test_history_width_one_keeps_latest():
    h = HistoryWindow.zeros(3, 2, 1)
    for t in range(4):
        h = history_update(h, [1, 0, 1], [t, t, t], [t + 1, t + 2])
        assert h.x[:, 0].tolist() == [1, 0, 1] and h.g[:, 0].tolist() == [t + 1, t + 2]


@given(st.integers(1, 6), st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=10))
def test_history_shift_property(w, cols):
    h = HistoryWindow.zeros(1, 1, w)
    for m, g in cols:
        old = h
        h = history_update(h, [1], [m], [g])
        assert h.m.shape == (1, w) and np.array_equal(h.m[:, :-1], old.m[:, 1:])
    tail = cols[-w:]
    assert h.m[0, w - len(tail):].tolist() == [m for m, _ in tail]
    assert h.g[0, w - len(tail):].tolist() == [g for _, g in tail]
    if len(cols) >= w:
        assert np.all(h.x == 1)  # no zero padding left


def test_history_composition_fixture():
    h0 = HistoryWindow.zeros(3, 1, 3)
    cols = [([1, 0, 0], [1.0, 2.0, 3.0], [4.0]), ([0, 0, 1], [0.5, 0.5, 0.5], [2.0])]
    h2 = history_update(history_update(h0, *cols[0]), *cols[1])
    again = history_update(history_update(h0, *cols[0]), *cols[1])
    assert np.array_equal(h2.x, again.x) and np.array_equal(h2.m, again.m) and np.array_equal(h2.g, again.g)
    assert not h0.x.any() and not h0.m.any()  # inputs untouched
    assert h2.x.tolist() == [[0, 1, 0], [0, 0, 0], [0, 0, 1]]
    assert h2.m[:, 1:].tolist() == [[1.0, 0.5], [2.0, 0.5], [3.0, 0.5]]
    assert h2.g.tolist() == [[0.0, 4.0, 2.0]]


def test_history_dimension_mismatch():
    with pytest.raises(ValueError):
        history_update(HistoryWindow.zeros(3, 1, 2), [1, 0], [0, 0, 0], [1])
    with pytest.raises(ValueError):
        history_update(HistoryWindow.zeros(3, 1, 2), [1, 0, 0], [0, 0, 0], [1, 2])


def test_history_sequence_layouts():
    h = HistoryWindow.zeros(3, 1, 2)
    h = history_update(h, [0, 1, 0], [1.0, 2.0, 3.0], [4.0])
    seq = h.sequence(4.0)
    assert seq.shape == (2, 7)
    assert seq[1].tolist() == [0, 1, 0, 0.25, 0.5, 0.75, 1.0]
    assert h.sequence(4.0, scatter=True)[1].tolist() == [0, 1, 0, 0.25, 0.5, 0.75, 0, 1.0, 0]


def test_predict_batteries_shape_and_range(rng):
    p = weight_init(2 * 4 + 2, 5, 4, rng, "tanh")
    p.dense_w *= 30
    h = HistoryWindow.zeros(4, 2, 3)
    for _ in range(5):
        b = predict_batteries(h, p, 5.0)
        assert b.shape == (4,) and np.all((b >= 0) & (b <= 5))
        h = history_update(h, rng.integers(0, 2, 4), b, rng.integers(0, 6, 2))
    ident = weight_init(10, 5, 4, rng, "identity")
    ident.dense_b[:] = [-3.0, 0.5, 2.0, 0.1]
    b = predict_batteries(HistoryWindow.zeros(4, 2, 3), ident, 5.0)
    assert b.min() >= 0 and b.max() <= 5


def test_predict_batteries_matches_reference(rng):
    p = weight_init(3 * 2 + 1, 4, 3, rng, "tanh")
    h = HistoryWindow(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), np.array([[2.0, 1.0], [3.0, 0.0], [1.0, 1.0]]),
                      np.array([[4.0, 2.0]]))
    seq = np.concatenate([h.x, h.m / 5.0, h.g / 5.0]).T
    expect = 5.0 * (network_forward(seq, p)[0] + 1.0) / 2.0
    np.testing.assert_allclose(predict_batteries(h, p, 5.0), expect, rtol=1e-15)


def _constant_predictor(n, value, capacity, n_in=3):
    """Zero LSTM, zero dense weights: every output reads ``value`` battery units."""
    nh = 2
    bias = np.full(n, np.arctanh(2.0 * value / capacity - 1.0))
    return NetworkParams(np.zeros((n_in + nh, 4 * nh)), np.zeros(4 * nh), np.zeros((nh, n)), bias, "tanh")


def test_td0_scalar_example():
    p = _constant_predictor(1, 2.0, 5.0)
    s = np.ones((2, 3))
    _, delta = td0_update(Transition(s, (0,), [2.0], s), p, 0.0, 0.99, 5.0)
    assert delta[0] == pytest.approx(1.98, rel=1e-12)


def test_td0_supervised_mode():
    p = _constant_predictor(3, 1.5, 5.0)
    s = np.ones((2, 3))
    _, delta = td0_update(Transition(s, (0, 2), [4.0, 0.5], s), p, 0.0, 0.0, 5.0)
    np.testing.assert_allclose(delta, [2.5, -1.0], rtol=1e-12)


def test_td0_fixed_point_is_noop():
    # v = R + gamma v' with v = v' = 2.5 needs R = 2.5 (1 - gamma)
    p = _constant_predictor(2, 2.5, 5.0)
    before = [a.copy() for a in p.arrays()]
    s = np.ones((2, 3))
    _, delta = td0_update(Transition(s, (1,), [1.25], s), p, 0.3, 0.5, 5.0)
    assert delta[0] == 0.0
    assert all(np.array_equal(u, v) for u, v in zip(before, p.arrays()))


def test_td0_only_scheduled_outputs_move():
    p = _constant_predictor(4, 2.0, 5.0)
    before = p.dense_b.copy()
    s = np.ones((2, 3))
    td0_update(Transition(s, (1, 3), [4.0, 0.0], s), p, 0.1, 0.0, 5.0)
    changed = p.dense_b != before
    assert changed.tolist() == [False, True, False, True]
    # ascent on the value of UE 1 (reported above the estimate), descent on UE 3
    assert p.dense_b[1] > before[1] and p.dense_b[3] < before[3]


def test_td0_reduces_supervised_error(rng):
    p = weight_init(3, 6, 2, rng, "tanh")
    s = rng.uniform(size=(4, 3))
    tr = Transition(s, (0, 1), [4.0, 1.0], s)
    first = np.abs(td0_update(tr, p, 0.2, 0.0, 5.0)[1]).sum()
    for _ in range(200):
        last = np.abs(td0_update(tr, p, 0.2, 0.0, 5.0)[1]).sum()
    assert last < 0.05 * first


def test_to_batteries_identity_clamp():
    b, slope = to_batteries(np.array([-0.5, 0.2, 1.5]), 5.0, "identity")
    assert b.tolist() == [0.0, 1.0, 5.0] and slope.tolist() == [0.0, 5.0, 0.0]

# ---------------------------------------------------------------------------
# joint network


def test_joint_reward_examples():
    assert joint_reward(10.0, 0.05, 100.0) == pytest.approx(5.0)
    assert joint_reward(7.5, 0.0) == 7.5


def _joint(rng, n=4, k=2, mode="enumerated", scatter=False):
    space = ActionSpace(n, k, mode)
    d = 3 * n if scatter else 2 * n + k
    return space, JointParams(weight_init(2 * n, 5, space.n_outputs, rng), weight_init(d, 5, n, rng, "tanh"))


def test_joint_forward_shapes_and_sensitivity(rng):
    space, params = _joint(rng)
    h = HistoryWindow.zeros(4, 2, 3)
    h = history_update(h, [1, 1, 0, 0], [1, 2, 3, 4], [2, 5])
    gains = rng.uniform(-1, 1, 4)
    b, q = joint_forward(h.sequence(5.0), gains, params, 5.0)
    assert b.shape == (1, 4) and q.shape == (1, comb(4, 2))
    h2 = history_update(HistoryWindow.zeros(4, 2, 3), [1, 1, 0, 0], [1, 2, 3, 4], [0, 1])
    b2, _ = joint_forward(h2.sequence(5.0), gains, params, 5.0)
    assert not np.allclose(b, b2)


def test_joint_q_depends_only_on_b_when_gains_zero(rng):
    _, params = _joint(rng)
    seq = rng.uniform(size=(3, 10))
    b, q = joint_forward(seq, np.zeros(4), params, 5.0)
    expect = network_forward(control_input(b / 5.0, np.zeros((1, 4))), params.a)
    assert np.array_equal(q, expect)


def _joint_batch(rng, space, n=4, k=2, w=3, size=5):
    out = []
    for _ in range(size):
        s = (rng.uniform(size=(w, 2 * n + k)), rng.uniform(-1, 1, n))
        s2 = (rng.uniform(size=(w, 2 * n + k)), rng.uniform(-1, 1, n))
        out.append(Transition(s, space.random(rng), float(rng.normal()), s2, False, rng.integers(0, 6, k)))
    return out


def test_joint_update_zero_error_is_noop(rng):
    space, params = _joint(rng)
    agent = JointAgent.create(params)
    batch = _joint_batch(rng, space)
    _, q = joint_forward(np.stack([t.state[0] for t in batch]), np.stack([t.state[1] for t in batch]),
                         agent.online, 5.0)
    for i, t in enumerate(batch):
        t.reward = q[i, space.index(t.action)]
        t.terminal = True
    before = [a.copy() for a in agent.online.arrays()]
    assert joint_update(batch, agent, 0.3, 0.9, space, 5.0) == 0.0
    assert all(np.array_equal(u, v) for u, v in zip(before, agent.online.arrays()))


def test_joint_update_frozen_b_reduces_to_access_update(rng):
    space, params = _joint(rng)
    joint = JointAgent.create(params)
    batch = _joint_batch(rng, space)
    cap = 5.0
    # the same step written as an access-control update on phi_A inputs built from phi_B estimates
    b, _ = joint_forward(np.stack([t.state[0] for t in batch]), np.stack([t.state[1] for t in batch]),
                         params, cap)
    b_next, _ = joint_forward(np.stack([t.next_state[0] for t in batch]),
                              np.stack([t.next_state[1] for t in batch]), joint.target, cap)
    access = AgentParams.create(params.a.copy())
    plain = [Transition(control_input(b[i] / cap, t.state[1])[0], t.action, t.reward,
                        control_input(b_next[i] / cap, t.next_state[1])[0], t.terminal)
             for i, t in enumerate(batch)]
    b_before = [a.copy() for a in params.b.arrays()]
    la = joint_update(batch, joint, 0.1, 0.9, space, cap, freeze_b=True)
    lb = dqn_update(plain, access, 0.1, 0.9, space)
    assert la == pytest.approx(lb, rel=1e-12)
    for u, v in zip(joint.online.a.arrays(), access.online.arrays()):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-14)
    assert all(np.array_equal(u, v) for u, v in zip(b_before, joint.online.b.arrays()))


def test_joint_update_trains_both_layers(rng):
    space, params = _joint(rng)
    agent = JointAgent.create(params)
    b_before = [a.copy() for a in params.b.arrays()]
    joint_update(_joint_batch(rng, space), agent, 0.1, 0.9, space, 5.0, pred_weight=1.0)
    assert any(not np.array_equal(u, v) for u, v in zip(b_before, agent.online.b.arrays()))
