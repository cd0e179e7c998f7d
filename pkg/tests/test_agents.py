import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import benign_tolerant, benign_vsc, small_pool
from vodu_alloc.agents import AcerConfig, PpoConfig, make_agent, train_agent
from vodu_alloc.agents.acer import (
    acer_actor_grad,
    acer_actor_loss,
    acer_update,
    retrace_targets,
    split_runs,
    truncate,
    trust_region_project,
)
from vodu_alloc.agents.policy import masked_softmax, sample
from vodu_alloc.agents.ppo import clipped_surrogate, gae_advantages, ppo_actor_grad, ppo_actor_loss
from vodu_alloc.agents.replay import ReplayBuffer, replay_sample
from vodu_alloc.agents.rollout import collect_rollout
from vodu_alloc.env import AllocationEnv, MdpConfig, Transition
from vodu_alloc.errors import DataIntegrityError, DomainError, StateError
from vodu_alloc.model import Instance
from vodu_alloc.nn import DenseNet, finite_diff_check
from vodu_alloc.workload import random_small_instance


def bandit_env():
    """One user per episode; vO-DU 1 idles at 40 W instead of 87 W."""
    model = small_pool(2, z_max=4.0, overrides={1: {"p_idle_w": 40.0}})
    return AllocationEnv(Instance(model, [benign_tolerant(1)]))


class TestGae:
    def test_two_step_example(self):
        adv, ret = gae_advantages([1, 1], [0.5, 0.5], [False, True], 0.0, 0.99, 0.95)
        assert adv[0] == pytest.approx(1.46525, abs=1e-12)
        assert adv[1] == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(ret, adv + 0.5)

    def test_three_step_hand_unrolled(self):
        r, v, boot, g, lam = [0.3, -1.2, 0.7], [0.1, -0.4, 0.25], 0.9, 0.97, 0.8
        d0 = r[0] + g * v[1] - v[0]
        d1 = r[1] + g * v[2] - v[1]
        d2 = r[2] + g * boot - v[2]
        expect = [d0 + g * lam * d1 + (g * lam) ** 2 * d2, d1 + g * lam * d2, d2]
        adv, _ = gae_advantages(r, v, [False] * 3, boot, g, lam)
        np.testing.assert_allclose(adv, expect, rtol=0, atol=1e-10)

    def test_terminal_cuts_bootstrap(self):
        adv, _ = gae_advantages([1.0, 2.0], [0.0, 0.0], [True, False], 5.0, 0.9, 0.9)
        assert adv[0] == 1.0
        assert adv[1] == 2.0 + 0.9 * 5.0

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.booleans()), min_size=1, max_size=8))
    def test_lambda_zero_is_td(self, steps):
        r, v, term = (np.array(x) for x in zip(*steps))
        adv, _ = gae_advantages(r, v, term, 0.3, 0.99, 0.0)
        next_v = np.append(v[1:], 0.3)
        td = r + 0.99 * next_v * (~term) - v
        assert np.array_equal(adv, td)

    def test_zero(self):
        adv, _ = gae_advantages(np.zeros(4), np.zeros(4), [False] * 4, 0.0, 0.99, 0.95)
        assert np.all(adv == 0)


class TestSurrogate:
    def test_ratio_one(self):
        adv = np.array([0.3, -1.2, 2.0])
        assert np.array_equal(clipped_surrogate(np.ones(3), adv, 0.2), adv)

    def test_clipped_branch(self):
        assert clipped_surrogate(np.array([2.0]), np.array([1.5]), 0.2)[0] == pytest.approx(1.2 * 1.5)

    @given(st.floats(1e-3, 10), st.floats(-10, 10), st.floats(0.01, 0.99))
    def test_bound(self, ratio, adv, eps):
        s = clipped_surrogate(np.array([ratio]), np.array([adv]), eps)[0]
        assert s <= ratio * adv + 1e-12
        assert s <= np.clip(ratio, 1 - eps, 1 + eps) * adv + 1e-12

    def test_loss_at_ratio_one(self):
        logits = np.array([[0.2, -0.1], [0.0, 0.5]])
        masks = np.ones((2, 2), dtype=bool)
        probs = masked_softmax(logits, masks)
        actions = np.array([0, 1])
        adv = np.array([0.7, -0.3])
        loss = ppo_actor_loss(logits, masks, actions, np.log(probs[[0, 1], actions]), adv, 0.2, 0.0)
        assert loss == pytest.approx(-adv.mean(), abs=1e-15)


def actor_check(loss, grad, seed, extra):
    """Finite-difference check of a logit-space loss/grad pair through a small actor."""
    rng = np.random.default_rng(seed)
    net = DenseNet(3, (5,), 2, seed=seed)
    x = rng.normal(size=(6, 3))
    masks = np.ones((6, 2), dtype=bool)
    actions = rng.integers(0, 2, size=6)
    args = extra(rng, net(x), masks, actions)

    def loss_fn(out):
        return loss(out, masks, actions, *args)

    def grad_fn(out):
        return grad(out, masks, actions, *args)

    return finite_diff_check(net, x, loss_fn, grad_fn)


@pytest.mark.parametrize("seed", range(4))
def test_ppo_gradient(seed):
    def extra(rng, logits, masks, actions):
        old = np.log(masked_softmax(logits, masks)[np.arange(6), actions]) + rng.normal(0, 0.3, size=6)
        return old, rng.normal(size=6), 0.2, 0.01

    report = actor_check(ppo_actor_loss, ppo_actor_grad, seed, extra)
    assert report.passed, report.max_rel_error


@pytest.mark.parametrize("seed", range(4))
def test_acer_gradient(seed):
    def extra(rng, logits, masks, actions):
        return rng.normal(size=6), rng.normal(size=(6, 2)), 0.01

    report = actor_check(acer_actor_loss, acer_actor_grad, seed, extra)
    assert report.passed, report.max_rel_error


class TestRetrace:
    def test_truncation_example(self):
        rho_bar, corr = truncate(20.0, 10.0)
        assert rho_bar == 10.0 and corr == 0.5

    @given(st.floats(1e-6, 1e6), st.floats(0.1, 100))
    def test_truncated_weight_bounded(self, rho, c):
        rho_bar, corr = truncate(rho, c)
        assert rho_bar <= c
        assert 0 <= corr < 1

    def test_one_step_on_policy_is_td(self):
        t = retrace_targets([0.4], [9.0], [1.0], [1.0], 2.5, 0.9, 1.0)
        assert t[0] == 0.4 + 0.9 * 2.5

    def test_three_step_brute_force(self):
        r = [0.5, -0.2, 1.1]
        q = [0.3, 0.8, -0.6]
        v = [0.2, 0.5, -0.1]
        rho = [0.7, 2.5, 0.4]
        g, lam, boot = 0.95, 0.9, 0.35
        c = [lam * min(1.0, x) for x in rho]
        t2 = r[2] + g * boot
        t1 = r[1] + g * (c[2] * (t2 - q[2]) + v[2])
        t0 = r[0] + g * (c[1] * (t1 - q[1]) + v[1])
        np.testing.assert_allclose(retrace_targets(r, q, v, rho, boot, g, lam), [t0, t1, t2], rtol=0, atol=1e-10)

    def test_on_policy_degenerates_to_corrected_return(self):
        # rho = 1 everywhere: target = sum_k g^k r_k + sum_k g^k (V_k - Q_k) over later steps
        r = [0.1, 0.2, 0.3]
        q = [1.0, 2.0, 3.0]
        v = [0.5, 0.25, 0.125]
        g, boot = 0.9, 0.7
        expect0 = r[0] + g * r[1] + g**2 * r[2] + g**3 * boot + g * (v[1] - q[1]) + g**2 * (v[2] - q[2])
        t = retrace_targets(r, q, v, [1.0] * 3, boot, g, 1.0)
        assert abs(t[0] - expect0) < 1e-10

    def test_split_runs(self):
        def tr(term):
            return Transition(np.zeros(1), 0, np.ones(1), 0.0, np.zeros(1), term)

        runs = split_runs([tr(False), tr(True), tr(False), tr(False)])
        assert [len(x) for x in runs] == [2, 2]

    def test_zero_behavior_prob_rejected(self):
        env = bandit_env()
        agent = make_agent("acer", env.obs_size, env.n_actions, config=AcerConfig(replay_start=10_000))
        batch = collect_rollout(env, agent.actor, 4, seed=0)
        bad = dataclasses.replace(batch.transitions[0], behavior_probs=np.array([0.0, 1.0]), action=0)
        with pytest.raises(DataIntegrityError):
            acer_update(agent, [[bad]], agent.config)

    def test_trust_region_projection(self):
        grad = np.array([[0.1, -0.1], [0.3, -0.3]])
        k = np.array([[0.0, 0.0], [-2.0, 2.0]])
        out = trust_region_project(grad, k, delta=0.1)
        assert np.array_equal(out[0], grad[0])
        g1 = -2 * grad[1]
        coef = (k[1] @ g1 - 0.1) / (k[1] @ k[1])
        np.testing.assert_allclose(out[1], -(g1 - coef * k[1]) / 2)


class TestReplay:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(3)
        buf.extend(range(5))
        assert len(buf) == 3
        assert [buf.at(i) for i in range(3)] == [2, 3, 4]

    def test_full_batch_is_permutation(self):
        buf = ReplayBuffer(10)
        buf.extend(range(10))
        assert sorted(replay_sample(buf, 10, seed=1)) == list(range(10))

    def test_underfull(self):
        buf = ReplayBuffer(20)
        buf.extend(range(10))
        with pytest.raises(StateError):
            replay_sample(buf, 11, seed=1)

    def test_seeded(self):
        buf = ReplayBuffer(50)
        buf.extend(range(50))
        assert replay_sample(buf, 7, seed=3) == replay_sample(buf, 7, seed=3)

    def test_bad_capacity(self):
        with pytest.raises(DomainError):
            ReplayBuffer(0)


class TestRollout:
    def test_length_and_masks(self):
        inst = random_small_instance(2, min_users=6)
        env = AllocationEnv(inst)
        actor = DenseNet(env.obs_size, (8,), env.n_actions, seed=0)
        batch = collect_rollout(env, actor, 40, seed=0)
        assert len(batch) == 40
        decided = batch.masks.any(axis=1)
        assert np.all(batch.behavior_probs[~batch.masks & decided[:, None]] == 0)
        assert np.all(batch.masks[np.arange(40), batch.actions] | ~decided)
        np.testing.assert_allclose(batch.behavior_probs.sum(axis=1), 1.0, atol=1e-6)

    def test_deterministic(self):
        inst = random_small_instance(2, min_users=6)
        actor = DenseNet(AllocationEnv(inst).obs_size, (8,), inst.model.m_count, seed=0)
        a = collect_rollout(AllocationEnv(inst), actor, 30, seed=5)
        b = collect_rollout(AllocationEnv(inst), actor, 30, seed=5)
        assert np.array_equal(a.actions, b.actions) and np.array_equal(a.rewards, b.rewards)

    def test_sample_never_picks_zero_prob(self):
        rng = np.random.default_rng(0)
        probs = np.array([0.0, 0.5, 0.0, 0.5])
        assert {sample(probs, rng) for _ in range(500)} == {1, 3}


@pytest.mark.parametrize("algo", ["ppo", "acer"])
def test_policies_stay_valid_after_updates(algo):
    inst = random_small_instance(6, min_users=6)
    env = AllocationEnv(inst, MdpConfig())
    cfg = PpoConfig(rollout_steps=64, minibatch_size=16) if algo == "ppo" else AcerConfig(replay_start=50)
    agent = make_agent(algo, env.obs_size, env.n_actions, config=cfg, seed=1)
    train_agent(agent, env, 400, seed=1)
    rng = np.random.default_rng(0)
    obs = rng.uniform(0, 1, size=(50, env.obs_size))
    masks = rng.random((50, env.n_actions)) < 0.6
    masks[:, 0] = True
    probs = masked_softmax(agent.actor(obs), masks)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(probs[~masks] == 0)
    assert all(np.isfinite(p).all() for p in agent.actor.params + agent.critic.params)


# sized for a 2000-step budget: short rollouts and a faster actor
BANDIT_CONFIGS = {
    "ppo": PpoConfig(rollout_steps=128, minibatch_size=32, hidden=(16,), actor_lr=3e-3),
    "acer": AcerConfig(rollout_steps=16, replay_start=64, hidden=(16,), actor_lr=3e-3),
}


@pytest.mark.parametrize("algo", ["ppo", "acer"])
@pytest.mark.parametrize("seed", range(5))
def test_bandit_learning(algo, seed):
    env = bandit_env()
    agent = make_agent(algo, env.obs_size, env.n_actions, config=BANDIT_CONFIGS[algo], seed=seed)
    train_agent(agent, env, 2000, seed=seed)
    obs = env.reset(seed=0)
    p = masked_softmax(agent.actor(obs), env.action_mask())
    assert p[1] >= 0.95, p


def test_unknown_algo():
    with pytest.raises(ValueError):
        make_agent("dqn", 3, 2)


def test_config_invariants():
    with pytest.raises(DomainError):
        PpoConfig(clip_epsilon=1.0)
    with pytest.raises(DomainError):
        AcerConfig(truncation_clip=0)
    with pytest.raises(DomainError):
        AcerConfig(replay_capacity=4, rollout_steps=8)
    with pytest.raises(DomainError):
        AcerConfig(trace_lambda=1.5)


def test_benign_helpers_are_feasible():
    # guard for the fixtures other agent tests lean on
    env = AllocationEnv(Instance(small_pool(), [benign_vsc(1)]))
    env.reset(seed=0)
    assert env.action_mask().all()


@pytest.mark.parametrize("algo", ["ppo", "acer"])
def test_train_agent_takes_exact_budget(algo):
    env = bandit_env()
    agent = make_agent(algo, env.obs_size, env.n_actions, config=BANDIT_CONFIGS[algo], seed=0)
    assert train_agent(agent, env, 77, seed=0) == 77
