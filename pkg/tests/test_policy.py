import numpy as np
import pytest

from graspkit.policy import MlpPolicy, ReplayPolicy, load_checkpoint, save_checkpoint


def test_forward_shapes_and_bounded_mean():
    policy = MlpPolicy(6, 3, hidden=16, rng=np.random.default_rng(0))
    obs = np.random.default_rng(1).normal(size=(11, 6)) * 5
    mean, value, _ = policy.forward(obs)
    assert mean.shape == (11, 3)
    assert value.shape == (11,)
    assert np.all(np.abs(mean) <= 1.0)


def test_log_prob_matches_gaussian_formula():
    policy = MlpPolicy(4, 2, hidden=8, rng=np.random.default_rng(2))
    rng = np.random.default_rng(3)
    obs = rng.normal(size=(5, 4))
    mean, _, _ = policy.forward(obs)
    actions = rng.normal(size=(5, 2))
    std = policy.std
    expected = -0.5 * np.sum(((actions - mean) / std) ** 2, axis=1) - np.sum(
        np.log(std)
    ) - 0.5 * 2 * np.log(2 * np.pi)
    np.testing.assert_allclose(policy.log_prob(mean, actions), expected, atol=1e-12)


def test_backward_matches_finite_differences():
    """Analytic backprop vs central differences on a random scalar loss."""
    policy = MlpPolicy(5, 2, hidden=7, rng=np.random.default_rng(4))
    rng = np.random.default_rng(5)
    obs = rng.normal(size=(6, 5))
    w_mean = rng.normal(size=(6, 2))
    w_value = rng.normal(size=6)

    def loss():
        mean, value, _ = policy.forward(obs)
        return float(np.sum(w_mean * mean) + np.sum(w_value * value))

    mean, value, cache = policy.forward(obs)
    grads = policy.backward(cache, w_mean, w_value)

    h = 1e-6
    for key in ("a_w1", "a_b2", "a_wm", "a_bm", "c_w1", "c_wv", "c_bv"):
        param = policy.params[key]
        flat_idx = [0, param.size // 2, param.size - 1]
        for idx in flat_idx:
            orig = param.flat[idx]
            param.flat[idx] = orig + h
            up = loss()
            param.flat[idx] = orig - h
            down = loss()
            param.flat[idx] = orig
            fd = (up - down) / (2 * h)
            assert grads[key].flat[idx] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_act_deterministic_is_mean():
    policy = MlpPolicy(3, 2, hidden=8, rng=np.random.default_rng(6))
    obs = np.array([0.2, -0.1, 0.5])
    a1 = policy.act(obs, deterministic=True)
    mean, _, _ = policy.forward(obs[None, :])
    np.testing.assert_array_equal(a1, mean[0])


def test_checkpoint_round_trip_bitwise(tmp_path):
    policy = MlpPolicy(4, 2, hidden=8, rng=np.random.default_rng(7))
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, policy, extras={"note": {"k": 1}})
    loaded, payload = load_checkpoint(path)
    assert payload["kind"] == "mlp"
    assert payload["note"] == {"k": 1}
    for key, val in policy.params.items():
        np.testing.assert_array_equal(loaded.params[key], val)
    obs = np.random.default_rng(8).normal(size=(3, 4))
    m1, v1, _ = policy.forward(obs)
    m2, v2, _ = loaded.forward(obs)
    np.testing.assert_array_equal(m1, m2)
    np.testing.assert_array_equal(v1, v2)


def test_replay_policy_tracks_sequence(tmp_path):
    qs = np.array([[0.0, 0.0], [0.04, -0.02], [0.08, -0.04], [0.08, -0.04]])
    policy = ReplayPolicy(qs, action_scale=0.05)
    policy.reset()
    obs = np.array([0.0, 0.0, 99.0])  # joints first, rest ignored
    a = policy.act(obs)
    np.testing.assert_allclose(a, [0.8, -0.4])
    # exhausting the sequence keeps targeting the last frame
    policy.reset()
    for _ in range(10):
        a = policy.act(np.array([0.08, -0.04, 0.0]))
    np.testing.assert_allclose(a, [0.0, 0.0], atol=1e-12)


def test_replay_checkpoint_round_trip(tmp_path):
    qs = np.random.default_rng(9).normal(size=(7, 3))
    policy = ReplayPolicy(qs, 0.05)
    path = tmp_path / "replay.json"
    save_checkpoint(path, policy)
    loaded, payload = load_checkpoint(path)
    assert payload["kind"] == "replay"
    np.testing.assert_array_equal(loaded.q_sequence, qs)
    assert loaded.action_scale == 0.05


def test_checkpoint_rejects_unknown_kind(tmp_path):
    import json

    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"version": 1, "kind": "mystery", "policy": {}}))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_finite_guard():
    policy = MlpPolicy(3, 2, hidden=4, rng=np.random.default_rng(10))
    assert policy.finite()
    policy.params["a_w1"][0, 0] = np.nan
    assert not policy.finite()
