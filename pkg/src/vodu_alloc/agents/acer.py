"""Off-policy actor-critic with experience replay (discrete actions).

The critic estimates action values ``Q(s, .)``; the state value is
``V(s) = sum_a pi(a|s) Q(s, a)``.  Updates use truncated importance weights
with a bias-correction term and Retrace-style targets computed backwards over
stored runs of consecutive transitions.  With ``trust_region`` on, the
logit-space step is projected against the KL to a running-average policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataIntegrityError, DomainError, NumericError
from ..nn import Adam, DenseNet
from .policy import entropy, entropy_grad, masked_log_softmax
from .replay import ReplayBuffer
from .rollout import as_rng, collect_rollout


@dataclass(frozen=True)
class AcerConfig:
    replay_capacity: int = 50_000
    replay_ratio: int = 4
    truncation_clip: float = 10.0
    trace_lambda: float = 1.0
    entropy_coeff: float = 0.05
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    rollout_steps: int = 24
    replay_segments: int = 4
    replay_start: int = 500
    hidden: tuple = (64, 64)
    max_grad_norm: float = 0.5
    scale_rewards: bool = True
    trust_region: bool = False
    trust_delta: float = 1.0
    avg_decay: float = 0.99

    def __post_init__(self):
        if self.replay_capacity < self.rollout_steps:
            raise DomainError("replay_capacity must hold at least one rollout")
        if not self.truncation_clip > 0:
            raise DomainError("truncation_clip must be > 0")
        if not 0 <= self.trace_lambda <= 1:
            raise DomainError("trace_lambda must lie in [0, 1]")
        if not (self.actor_lr > 0 and self.critic_lr > 0):
            raise DomainError("learning rates must be > 0")
        if not self.trust_delta > 0:
            raise DomainError("trust_delta must be > 0")
        if not 0 <= self.avg_decay < 1:
            raise DomainError("avg_decay must lie in [0, 1)")


def truncate(rho, c):
    """Truncated weight ``min(c, rho)`` and bias-correction weight ``max(0, 1 - c/rho)``."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        corr = np.maximum(0.0, 1.0 - c / rho)
    return np.minimum(c, rho), np.where(rho > 0, corr, 0.0)


def retrace_targets(rewards, q_taken, values, rho_taken, bootstrap, gamma, trace_lambda):
    """Backward recursion for action-value targets over one run.

    ``bootstrap`` is ``V`` of the state after the last transition (0 if that
    transition was terminal).
    """
    q_ret = float(bootstrap)
    targets = np.zeros(len(rewards))
    for i in reversed(range(len(rewards))):
        q_ret = rewards[i] + gamma * q_ret
        targets[i] = q_ret
        trace = trace_lambda * min(1.0, rho_taken[i])
        q_ret = trace * (q_ret - q_taken[i]) + values[i]
    return targets


def acer_actor_loss(logits, masks, actions, main_coef, bias_coef, entropy_coeff):
    """Surrogate whose gradient is the truncated-IS policy gradient.

    ``main_coef[i]`` is ``rho_bar_i * (Q_ret_i - V_i)``; ``bias_coef[i, a]`` is
    ``max(0, 1 - c/rho_a) * pi_a * (Q_a - V_i)``; both are constants.
    Accepts logits with extra leading dims.
    """
    logp = masked_log_softmax(logits, masks)
    probs = np.where(np.isfinite(logp), np.exp(logp), 0.0)
    safe = np.where(probs > 0, logp, 0.0)
    idx = np.broadcast_to(np.asarray(actions)[:, None], logp.shape[:-1] + (1,))
    logp_a = np.take_along_axis(logp, idx, axis=-1)[..., 0]
    main = main_coef * logp_a
    bias = np.sum(bias_coef * safe, axis=-1)
    return -np.mean(main + bias, axis=-1) - entropy_coeff * np.mean(entropy(probs, logp), axis=-1)


def acer_actor_grad(logits, masks, actions, main_coef, bias_coef, entropy_coeff):
    n = logits.shape[0]
    logp = masked_log_softmax(logits, masks)
    probs = np.where(np.isfinite(logp), np.exp(logp), 0.0)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), actions] = 1.0
    grad = main_coef[:, None] * (onehot - probs)
    grad += bias_coef - probs * bias_coef.sum(axis=-1, keepdims=True)
    grad = -grad / n
    grad -= entropy_coeff * entropy_grad(probs, logp) / n
    return grad


def trust_region_project(grad, kl_grad, delta):
    """Project per-sample logit gradients of a mean loss onto the KL half-space.

    ``kl_grad[i]`` is the logit gradient of KL(avg || pi) for sample i
    (``pi - pi_avg`` for a softmax).  The ascent direction ``g = -n * grad``
    becomes ``g - max(0, (k.g - delta) / |k|^2) k``.
    """
    n = grad.shape[0]
    g = -n * grad
    dot = np.sum(kl_grad * g, axis=-1)
    norm2 = np.sum(kl_grad**2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(norm2 > 0, np.maximum(0.0, (dot - delta) / norm2), 0.0)
    return -(g - coef[:, None] * kl_grad) / n


class AcerAgent:
    name = "acer"

    def __init__(self, obs_size, n_actions, config: AcerConfig = AcerConfig(), seed=0):
        self.config = config
        self.n_actions = n_actions
        rng = np.random.default_rng(seed)
        self.actor = DenseNet(obs_size, config.hidden, n_actions, seed=int(rng.integers(2**63)), out_scale=0.01)
        self.critic = DenseNet(obs_size, config.hidden, n_actions, seed=int(rng.integers(2**63)))
        self.actor_opt = Adam(self.actor, lr=config.actor_lr, max_grad_norm=config.max_grad_norm)
        self.critic_opt = Adam(self.critic, lr=config.critic_lr, max_grad_norm=config.max_grad_norm)
        self.replay = ReplayBuffer(config.replay_capacity)
        self.avg_actor = self.actor.copy() if config.trust_region else None
        self.return_stats = RunningStd()
        self._ret = 0.0

    def collect(self, env, rng, n_steps=None):
        n = self.config.rollout_steps if n_steps is None else n_steps
        return collect_rollout(env, self.actor, n, rng)

    def update(self, batch, rng):
        """One on-policy update on ``batch`` then ``replay_ratio`` replayed ones."""
        cfg = self.config
        self.replay.extend(batch.transitions)
        for t in batch.transitions:
            self._ret = self._ret * cfg.gamma + t.reward
            self.return_stats.push(self._ret)
            if t.terminal:
                self._ret = 0.0
        scale = self.reward_scale()
        stats = [acer_update(self, split_runs(batch.transitions), cfg, scale)]
        if len(self.replay) >= cfg.replay_start:
            for _ in range(cfg.replay_ratio):
                segs = self.replay.sample_segments(cfg.replay_segments, cfg.rollout_steps, rng)
                stats.append(acer_update(self, segs, cfg, scale))
        return {k: float(np.mean([s[k] for s in stats])) for k in ("actor_loss", "critic_loss")}

    def reward_scale(self) -> float:
        """Divisor applied to rewards: running std of discounted returns."""
        if not self.config.scale_rewards or self.return_stats.count < 2:
            return 1.0
        return max(self.return_stats.std, 1e-8)


class RunningStd:
    """Welford accumulator."""

    def __init__(self):
        self.count, self.mean, self.m2 = 0, 0.0, 0.0

    def push(self, x: float):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.m2 / self.count)) if self.count else 0.0


def split_runs(transitions) -> list:
    """Cut a transition sequence after every terminal."""
    runs, cur = [], []
    for t in transitions:
        cur.append(t)
        if t.terminal:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def _policy(logits, masks):
    """Policy used for targets; steps with no feasible action count as uniform."""
    decided = masks.any(axis=-1)
    eff = np.where(decided[:, None], masks, True)
    logp = masked_log_softmax(logits, eff)
    return np.where(np.isfinite(logp), np.exp(logp), 0.0), decided


def acer_update(agent: AcerAgent, segments, config: AcerConfig, reward_scale: float = 1.0) -> dict:
    """One gradient step of actor and critic on a list of transition runs.

    Rewards are divided by ``reward_scale`` so the critic works in those units.
    """
    flat = [t for seg in segments for t in seg]
    n = len(flat)
    obs = np.array([t.obs for t in flat])
    masks = np.array([t.mask for t in flat])
    actions = np.array([t.action for t in flat], dtype=int)
    mu = np.array([t.behavior_probs for t in flat])
    rewards = np.array([t.reward for t in flat]) / reward_scale

    logits, acache = agent.actor.forward(obs)
    q, ccache = agent.critic.forward(obs)
    pi, decided = _policy(logits, masks)
    values = np.sum(pi * q, axis=-1)
    rows = np.arange(n)
    mu_taken = mu[rows, actions]
    if np.any(mu_taken <= 0):
        raise DataIntegrityError("a stored action has zero behavior probability")
    rho_taken = pi[rows, actions] / mu_taken

    ends = [seg[-1] for seg in segments]
    next_obs = np.array([t.next_obs for t in ends])
    next_masks = np.array([t.next_mask for t in ends])
    next_pi, _ = _policy(agent.actor(next_obs), next_masks)
    next_v = np.sum(next_pi * agent.critic(next_obs), axis=-1)

    q_taken = q[rows, actions]
    targets = np.zeros(n)
    start = 0
    for k, seg in enumerate(segments):
        sl = slice(start, start + len(seg))
        boot = 0.0 if seg[-1].terminal else next_v[k]
        targets[sl] = retrace_targets(
            rewards[sl], q_taken[sl], values[sl], rho_taken[sl], boot, config.gamma, config.trace_lambda
        )
        start += len(seg)

    with np.errstate(divide="ignore", invalid="ignore"):
        rho_all = np.where(mu > 0, pi / mu, 0.0)
    rho_bar, _ = truncate(rho_taken, config.truncation_clip)
    _, corr = truncate(rho_all, config.truncation_clip)
    main_coef = rho_bar * (targets - values)
    bias_coef = corr * pi * (q - values[:, None])

    err = q_taken - targets
    critic_loss = 0.5 * float(np.mean(err**2))
    d = decided
    actor_loss = 0.0
    if d.any():
        args = (masks[d], actions[d], main_coef[d], bias_coef[d], config.entropy_coeff)
        actor_loss = float(acer_actor_loss(logits[d], *args))
    if not (np.isfinite(actor_loss) and np.isfinite(critic_loss)):
        raise NumericError("non-finite ACER loss; update aborted")

    if d.any():
        g_logits = np.zeros_like(logits)
        g_logits[d] = acer_actor_grad(logits[d], *args)
        if agent.avg_actor is not None:
            avg_pi, _ = _policy(agent.avg_actor(obs[d]), masks[d])
            g_logits[d] = trust_region_project(g_logits[d], pi[d] - avg_pi, config.trust_delta)
        agrads, _ = agent.actor.backward(acache, g_logits)
        agent.actor_opt.step(agrads)
        if agent.avg_actor is not None:
            a = config.avg_decay
            for avg, cur in zip(agent.avg_actor.params, agent.actor.params):
                avg *= a
                avg += (1.0 - a) * cur
            agent.avg_actor.touch()
    g_q = np.zeros_like(q)
    g_q[rows, actions] = err / n
    cgrads, _ = agent.critic.backward(ccache, g_q)
    agent.critic_opt.step(cgrads)
    return {"actor_loss": actor_loss, "critic_loss": critic_loss}
