import numpy as np
import pytest
from helpers import Chain, make_batch

from tlrl.algorithms import advantages, returns_to_go, sample_batch, write_trajectories_csv
from tlrl.critic import CriticModel
from tlrl.envs import GridWorld, WirelessEnv
from tlrl.policies import GaussianPolicy, SoftmaxPolicy
from tlrl.tensor_core import ParafacModel


def right_policy():
    # logits tensor 5x5x4 with a huge logit on "right" everywhere
    out = np.array([[0.0], [0.0], [0.0], [200.0]])
    return SoftmaxPolicy(ParafacModel((np.ones((5, 1)), np.ones((5, 1)), out)), 1.0)


def test_deterministic_path(rng):
    b = sample_batch(GridWorld(), right_policy(), 1, 3, rng)
    assert [tuple(s) for s in b.state_idx[0]] == [(0, 0), (0, 1), (0, 2)]
    assert np.array_equal(b.actions[0], [3, 3, 3])
    assert np.all(b.mask) and np.array_equal(b.rewards[0], [-1, -1, -1])


def test_batch_shapes(rng):
    pol = SoftmaxPolicy.create((5, 5), 4, 2, 1.0, rng)
    b = sample_batch(GridWorld(), pol, 7, 20, rng)
    assert b.U == 7 and b.T == 20
    assert np.all(b.lengths <= 20) and np.all(b.lengths >= 1)
    # realized steps are a prefix of each row
    for u in range(7):
        n = b.lengths[u]
        assert b.mask[u, :n].all() and not b.mask[u, n:].any()


def test_early_termination_stops_accumulating(rng):
    g = GridWorld(1, 2)
    b = sample_batch(g, SoftmaxPolicy(ParafacModel((np.ones((1, 1)), np.ones((2, 1)),
                                                    np.array([[0.0], [0.0], [0.0], [50.0]]))), 1.0),
                     2, 10, rng)
    assert np.all(b.lengths == 1)
    assert np.array_equal(b.episode_returns(), [9.0, 9.0])


def test_chain_visit_distribution(rng):
    pol = SoftmaxPolicy(ParafacModel((np.ones((2, 1)), np.zeros((3, 1)))), 1.0)  # uniform
    b = sample_batch(Chain(), pol, 200, 51, rng)
    visits = b.state_idx[:, 1:, 0].ravel()  # states after the first transition
    n = visits.size
    p1 = 1 / 3
    assert abs(visits.mean() - p1) <= 3 * np.sqrt(p1 * (1 - p1) / n)


def test_policy_env_mismatch(rng):
    with pytest.raises(ValueError):
        sample_batch(GridWorld(), GaussianPolicy.create((5, 5), 2, 1.0, rng), 1, 3, rng)
    with pytest.raises(ValueError):
        sample_batch(GridWorld(), SoftmaxPolicy.create((4, 5), 4, 2, 1.0, rng), 1, 3, rng)
    with pytest.raises(ValueError):
        sample_batch(WirelessEnv(), SoftmaxPolicy.create((4, 4, 2, 2, 4, 4), 3, 1, 1.0, rng), 1, 3, rng)


def test_gaussian_actions_recorded_before_clamp(rng):
    env = WirelessEnv()
    pol = GaussianPolicy.create(env.state_dims, 2, 5.0, rng, action_dim=2)
    b = sample_batch(env, pol, 4, 10, rng)
    assert b.actions.shape == (4, 10, 2)
    assert np.any(b.actions < 0) or np.any(b.actions > env.cfg.max_power)
    idx, acts, logp = b.valid()
    np.testing.assert_array_equal(pol.log_prob_batch(idx, acts), logp)


def test_returns_simple():
    b = make_batch([[((0,), 0, 1.0)] * 3])
    assert np.array_equal(b.returns[0], [3.0, 2.0, 1.0])


def test_returns_zero():
    b = make_batch([[((0,), 0, 0.0)] * 4])
    assert not np.any(b.returns)


def test_returns_double_sum_oracle(rng):
    eps = [[((0,), 0, float(rng.normal())) for _ in range(int(rng.integers(1, 8)))] for _ in range(5)]
    b = make_batch(eps, T=8)
    for u, ep in enumerate(eps):
        for t in range(len(ep)):
            assert b.returns[u, t] == pytest.approx(sum(r for _, _, r in ep[t:]), abs=1e-12)
            # telescoping: G_t = R_t + G_{t+1}
            nxt = b.returns[u, t + 1] if t + 1 < len(ep) else 0.0
            assert b.returns[u, t] == pytest.approx(ep[t][2] + nxt, abs=1e-12)
        assert not np.any(b.returns[u, len(ep):])


def test_advantages_zero_critic():
    b = make_batch([[((0,), 0, 1.0), ((1,), 0, 2.0)]])
    np.testing.assert_array_equal(advantages(b, CriticModel.zeros((2,), 1)), b.valid_returns())


def test_advantages_perfect_critic():
    b = make_batch([[((0,), 0, 1.0), ((1,), 0, 2.0)]])
    crit = CriticModel(ParafacModel((np.array([[3.0], [2.0]]),)))
    assert not np.any(advantages(b, crit))


def test_advantages_direct(rng):
    crit = CriticModel.create((3,), 2, rng)
    b = make_batch([[((int(rng.integers(0, 3)),), 0, float(rng.normal())) for _ in range(6)]])
    ref = [b.returns[0, t] - crit.values([b.state_idx[0, t]])[0] for t in range(6)]
    np.testing.assert_allclose(advantages(b, crit), ref, atol=1e-14)


def test_advantage_normalization():
    b = make_batch([[((0,), 0, float(r)) for r in range(5)]])
    a = advantages(b, None, normalize=True)
    assert abs(a.mean()) < 1e-12 and abs(a.std() - 1) < 1e-6


def test_returns_required():
    b = make_batch([[((0,), 0, 1.0)]])
    b.returns = None
    with pytest.raises(ValueError):
        b.valid_returns()


def test_trajectory_csv(tmp_path, rng):
    b = returns_to_go(sample_batch(GridWorld(), right_policy(), 2, 3, rng))
    write_trajectories_csv(b, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "episode,t,s0,s1,a0,reward"
    assert len(lines) == 1 + 6
