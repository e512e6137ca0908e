import math

import numpy as np
import pytest

from graspkit.reward import (
    FingertipState,
    ReferenceTrajectory,
    RewardConfig,
    RewardState,
    contact_reward,
    dist,
    height_reward,
    k_max,
    r_dist,
    total_reward,
    trajectory_following_reward,
    trajectory_mapping_reward,
)
from graspkit.transforms import quat_normalize

CFG = RewardConfig()


def random_state(rng) -> FingertipState:
    pos = rng.uniform(-0.2, 0.2, size=(5, 3))
    quat = np.stack([quat_normalize(rng.normal(size=4)) for _ in range(5)])
    return FingertipState(pos, quat)


def random_reference(rng, T) -> ReferenceTrajectory:
    return ReferenceTrajectory.from_states([random_state(rng) for _ in range(T)])


def nearby_state(rng, base: FingertipState, scale) -> FingertipState:
    pos = base.pos + rng.normal(scale=scale, size=(5, 3))
    quat = np.stack([quat_normalize(q + rng.normal(scale=scale, size=4)) for q in base.quat])
    return FingertipState(pos, quat)


# -- independent oracles (plain loops and math.*) ---------------------------


def dist_oracle(s, d, cfg):
    total = 0.0
    for i in range(5):
        dp = math.sqrt(sum((s.pos[i][k] - d.pos[i][k]) ** 2 for k in range(3)))
        dot = abs(sum(s.quat[i][k] * d.quat[i][k] for k in range(4)))
        total += cfg.alpha_pos * dp + cfg.alpha_rot * 2.0 * math.acos(min(dot, 1.0))
    return total


def k_max_oracle(s, ref, cfg):
    best = -1
    for k in range(len(ref)):
        if dist_oracle(s, ref.state(k), cfg) < cfg.epsilon:
            best = k
    return best


def follow_oracle(s, ref, best_k, cfg):
    k = k_max_oracle(s, ref, cfg)
    if k > best_k:
        return (1.0 - math.tanh(dist_oracle(s, ref.state(k), cfg))) * (
            cfg.eta + cfg.beta_prog * k
        ), k
    return 0.0, best_k


# -- spec examples -----------------------------------------------------------


def test_dist_identity_is_zero():
    rng = np.random.default_rng(0)
    s = random_state(rng)
    assert dist(s, s, CFG) == pytest.approx(0.0, abs=1e-12)


def test_dist_single_displaced_fingertip():
    rng = np.random.default_rng(1)
    s = random_state(rng)
    pos = s.pos.copy()
    pos[2, 0] += 0.04
    d = FingertipState(pos, s.quat.copy())
    assert dist(s, d, CFG) == pytest.approx(0.04, abs=1e-12)


def test_dist_single_rotated_fingertip():
    rng = np.random.default_rng(2)
    s = random_state(rng)
    quat = s.quat.copy()
    w, x, y, z = quat[1]
    quat[1] = np.array([-x, w, z, -y])  # multiply by pure-i quaternion: angle pi
    d = FingertipState(s.pos.copy(), quat)
    assert dist(s, d, CFG) == pytest.approx(0.03 * math.pi, abs=1e-9)


def test_r_dist_values():
    rng = np.random.default_rng(3)
    s = random_state(rng)
    assert r_dist(s, s, CFG) == pytest.approx(1.0)
    pos = s.pos.copy()
    pos[0, 1] += 0.04
    d = FingertipState(pos, s.quat.copy())
    assert r_dist(s, d, CFG) == pytest.approx(1.0 - math.tanh(0.04), abs=1e-12)
    pos2 = s.pos + 100.0
    far = FingertipState(pos2, s.quat.copy())
    assert 0.0 < r_dist(s, far, CFG) < 1e-12 or r_dist(s, far, CFG) == 0.0


def test_k_max_examples():
    rng = np.random.default_rng(4)
    ref = random_reference(rng, 10)
    assert k_max(ref.state(9), ref, CFG) == 9
    far = FingertipState(ref.pos[0] + 10.0, ref.quat[0])
    assert k_max(far, ref, CFG) == -1


def test_following_reward_examples():
    rng = np.random.default_rng(5)
    ref = random_reference(rng, 8)
    r, st = trajectory_following_reward(ref.state(0), ref, RewardState(), CFG)
    assert r == pytest.approx(30.0)
    assert st.best_k == 0
    r, st = trajectory_following_reward(ref.state(5), ref, RewardState(best_k=0), CFG)
    assert r == pytest.approx(31.0)
    assert st.best_k == 5
    # no progress: matched index not beyond the best seen
    r, st = trajectory_following_reward(ref.state(3), ref, RewardState(best_k=5), CFG)
    assert r == 0.0
    assert st.best_k == 5


def test_contact_reward_rules():
    assert contact_reward([True, True, True, False, False], CFG) == pytest.approx(0.5)
    assert contact_reward([True, False, False, False, False], CFG) == 0.0
    assert contact_reward([False, True, True, True, True], CFG) == 0.0
    with pytest.raises(ValueError):
        contact_reward([True, True], CFG)


def test_height_reward_rules():
    assert height_reward(0.0, CFG) == 0.0
    assert height_reward(0.25, CFG) == pytest.approx(10.0 * 0.25 + 5.0)
    assert height_reward(0.10, CFG) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        height_reward(float("nan"), CFG)


def test_total_reward_composition():
    rng = np.random.default_rng(6)
    ref = random_reference(rng, 6)
    far = FingertipState(ref.pos[0] + 10.0, ref.quat[0])
    r, _ = total_reward(far, ref, RewardState(), [False] * 5, 0.0, CFG)
    assert r == 0.0
    r, _ = total_reward(far, ref, RewardState(), [True, True, True, False, False], 0.0, CFG)
    assert r == pytest.approx(0.5)
    # progress + contact * (1 + height): s = d_5 exactly, so r_dist = 1 and
    # the composition is (30 + 0.2*5) + 0.5 * (1 + 10*0.15) = 32.25
    s = ref.state(5)
    contacts = [True, True, True, True, False]
    height = 0.15
    r, _ = total_reward(s, ref, RewardState(best_k=0), contacts, height, CFG)
    assert r == pytest.approx(31.0 + 0.5 * (1.0 + 1.5), abs=1e-9)
    # and a perturbed case against the independent oracle
    s2 = nearby_state(np.random.default_rng(60), ref.state(4), 0.01)
    r2, _ = total_reward(s2, ref, RewardState(best_k=0), contacts, height, CFG)
    expected = follow_oracle(s2, ref, 0, CFG)[0] + 0.5 * (1.0 + 1.5)
    assert r2 == pytest.approx(expected, abs=1e-9)


def test_mapping_reward():
    rng = np.random.default_rng(7)
    ref = random_reference(rng, 5)
    assert trajectory_mapping_reward(ref.state(2), ref, 2, CFG) == pytest.approx(1.0)
    far = FingertipState(ref.pos[0] + 50.0, ref.quat[0])
    assert trajectory_mapping_reward(far, ref, 0, CFG) < 1e-12
    s = nearby_state(rng, ref.state(1), 0.01)
    expected = 1.0 - math.tanh(dist_oracle(s, ref.state(1), CFG))
    assert trajectory_mapping_reward(s, ref, 1, CFG) == pytest.approx(expected, abs=1e-9)
    with pytest.raises(ValueError):
        trajectory_mapping_reward(ref.state(0), ref, 5, CFG)


# -- oracle sweeps ------------------------------------------------------------


def test_dist_and_r_dist_match_oracle_1000():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        s, d = random_state(rng), random_state(rng)
        expected = dist_oracle(s, d, CFG)
        assert dist(s, d, CFG) == pytest.approx(expected, abs=1e-9)
        assert r_dist(s, d, CFG) == pytest.approx(1.0 - math.tanh(expected), abs=1e-9)


def test_k_max_matches_linear_scan_1000():
    rng = np.random.default_rng(9)
    ref = random_reference(rng, 20)
    hits = 0
    for _ in range(1000):
        base = ref.state(rng.integers(0, 20))
        s = nearby_state(rng, base, rng.choice([0.001, 0.003, 0.01, 0.05]))
        expected = k_max_oracle(s, ref, CFG)
        assert k_max(s, ref, CFG) == expected
        hits += expected >= 0
    assert hits > 100  # the sweep exercises both matched and unmatched cases


def test_following_and_total_match_oracle_1000():
    rng = np.random.default_rng(10)
    ref = random_reference(rng, 15)
    state = RewardState()
    for _ in range(1000):
        base = ref.state(rng.integers(0, 15))
        s = nearby_state(rng, base, rng.choice([0.002, 0.01, 0.05]))
        expected_r, expected_k = follow_oracle(s, ref, state.best_k, CFG)
        contacts = list(rng.random(5) < 0.5)
        height = float(rng.uniform(-0.05, 0.4))
        expected_total = expected_r + contact_reward(contacts, CFG) * (
            1.0 + height_reward(height, CFG)
        )
        total, new_state = total_reward(s, ref, state, contacts, height, CFG)
        assert total == pytest.approx(expected_total, abs=1e-9)
        assert new_state.best_k == expected_k
        state = new_state


# -- structural invariants -----------------------------------------------------


def test_positive_reward_floor():
    rng = np.random.default_rng(11)
    ref = random_reference(rng, 12)
    floor = (1.0 - math.tanh(CFG.epsilon)) * CFG.eta
    assert floor == pytest.approx(28.80, abs=0.01)
    state = RewardState()
    positives = 0
    for _ in range(2000):
        s = nearby_state(rng, ref.state(rng.integers(0, 12)), 0.005)
        r, state = trajectory_following_reward(s, ref, state, CFG)
        if state.best_k == 11:
            state = RewardState()  # fresh episode once the end is matched
        if r > 0:
            positives += 1
            assert r >= floor
    assert positives > 50


def test_episode_sum_upper_bound_and_at_most_once():
    rng = np.random.default_rng(12)
    T = 10
    ref = random_reference(rng, T)
    bound = T * CFG.eta + CFG.beta_prog * T * (T - 1) / 2
    for _ in range(50):
        state = RewardState()
        total = 0.0
        paid = set()
        for _ in range(40):
            s = nearby_state(rng, ref.state(rng.integers(0, T)), 0.01)
            r, new_state = trajectory_following_reward(s, ref, state, CFG)
            if r > 0:
                assert new_state.best_k not in paid  # each index pays at most once
                paid.add(new_state.best_k)
            assert new_state.best_k >= state.best_k  # monotone best index
            state = new_state
            total += r
        assert total <= bound + 1e-9


def test_height_term_gated_by_contact():
    rng = np.random.default_rng(13)
    ref = random_reference(rng, 5)
    far = FingertipState(ref.pos[0] + 10.0, ref.quat[0])
    for height in (0.0, 0.1, 0.5, 2.0):
        r, _ = total_reward(far, ref, RewardState(), [False] * 5, height, CFG)
        assert r == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        RewardConfig(eta=-1.0)


def test_reference_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    ref = random_reference(rng, 7)
    path = tmp_path / "ref.json"
    ref.save(path)
    loaded = ReferenceTrajectory.load(path)
    assert len(loaded) == 7
    np.testing.assert_allclose(loaded.pos, ref.pos, atol=1e-15)
    np.testing.assert_allclose(loaded.quat, ref.quat, atol=1e-15)


def test_reward_state_independent_of_caller_mutation():
    rng = np.random.default_rng(15)
    ref = random_reference(rng, 5)
    st = RewardState(best_k=2)
    trajectory_following_reward(ref.state(1), ref, st, CFG)
    assert st.best_k == 2  # input state never mutated
