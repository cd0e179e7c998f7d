"""On-policy PPO with a clipped surrogate and generalized advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, NumericError
from ..nn import Adam, DenseNet
from .policy import entropy, entropy_grad, masked_log_softmax
from .rollout import as_rng, collect_rollout


@dataclass(frozen=True)
class PpoConfig:
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.95
    rollout_steps: int = 1024
    epochs_per_batch: int = 4
    minibatch_size: int = 64
    entropy_coeff: float = 0.01
    value_coeff: float = 0.5
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    hidden: tuple = (64, 64)
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise DomainError("clip_epsilon must lie in (0, 1)")
        if not 0 <= self.gae_lambda <= 1:
            raise DomainError("gae_lambda must lie in [0, 1]")
        if not (self.actor_lr > 0 and self.critic_lr > 0):
            raise DomainError("learning rates must be > 0")
        if self.rollout_steps < 1 or self.minibatch_size < 1 or self.epochs_per_batch < 1:
            raise DomainError("rollout, minibatch and epoch counts must be >= 1")


def gae_advantages(rewards, values, terminals, last_value, gamma, lam):
    """Generalized advantage estimates and returns (= advantages + values)."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    terminals = np.asarray(terminals, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        nonterminal = 0.0 if terminals[t] else 1.0
        next_value = last_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + values


def clipped_surrogate(ratio, adv, eps):
    """Per-sample ``min(r A, clip(r, 1-eps, 1+eps) A)``."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def ppo_actor_loss(logits, masks, actions, old_logp, adv, eps, entropy_coeff):
    """Actor loss; works on logits with extra leading dims (for gradient checks)."""
    logp = masked_log_softmax(logits, masks)
    probs = np.where(np.isfinite(logp), np.exp(logp), 0.0)
    idx = np.broadcast_to(np.asarray(actions)[:, None], logp.shape[:-1] + (1,))
    logp_a = np.take_along_axis(logp, idx, axis=-1)[..., 0]
    ratio = np.exp(logp_a - old_logp)
    surr = clipped_surrogate(ratio, adv, eps)
    return -np.mean(surr, axis=-1) - entropy_coeff * np.mean(entropy(probs, logp), axis=-1)


def ppo_actor_grad(logits, masks, actions, old_logp, adv, eps, entropy_coeff):
    """d(actor loss)/d(logits) for a ``(n, M)`` logit matrix."""
    n = logits.shape[0]
    logp = masked_log_softmax(logits, masks)
    probs = np.where(np.isfinite(logp), np.exp(logp), 0.0)
    logp_a = logp[np.arange(n), actions]
    ratio = np.exp(logp_a - old_logp)
    unclipped = ratio * adv <= np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    inside = (ratio > 1.0 - eps) & (ratio < 1.0 + eps)
    d_ratio = np.where(unclipped | inside, adv, 0.0)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), actions] = 1.0
    d_logp_a = -(d_ratio * ratio) / n
    grad = d_logp_a[:, None] * (onehot - probs)
    grad -= entropy_coeff * entropy_grad(probs, logp) / n
    return grad


class PpoAgent:
    """Separate actor (logits over vO-DUs) and critic (state value) networks."""

    name = "ppo"

    def __init__(self, obs_size, n_actions, config: PpoConfig = PpoConfig(), seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.actor = DenseNet(obs_size, config.hidden, n_actions, seed=int(rng.integers(2**63)), out_scale=0.01)
        self.critic = DenseNet(obs_size, config.hidden, 1, seed=int(rng.integers(2**63)))
        self.actor_opt = Adam(self.actor, lr=config.actor_lr, max_grad_norm=config.max_grad_norm)
        self.critic_opt = Adam(self.critic, lr=config.critic_lr, max_grad_norm=config.max_grad_norm)

    def collect(self, env, rng, n_steps=None):
        n = self.config.rollout_steps if n_steps is None else n_steps
        return collect_rollout(env, self.actor, n, rng, critic=self.critic)

    def update(self, batch, rng):
        return ppo_update(self, batch, rng)


def ppo_update(agent: PpoAgent, batch, seed=None) -> dict:
    """Several epochs of minibatch updates on one rollout, which is then discarded."""
    cfg = agent.config
    rng = as_rng(seed)
    adv, returns = gae_advantages(
        batch.rewards, batch.values, batch.terminals, batch.last_value, cfg.gamma, cfg.gae_lambda
    )
    std = adv.std()
    adv = (adv - adv.mean()) / (std if std > 1e-12 else 1.0)
    n = len(batch)
    decided = batch.masks.any(axis=1)
    old_logp = np.log(batch.behavior_probs[np.arange(n), batch.actions])
    stats = {"actor_loss": 0.0, "critic_loss": 0.0, "updates": 0}
    for _ in range(cfg.epochs_per_batch):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            values, ccache = agent.critic.forward(batch.obs[idx])
            err = values[:, 0] - returns[idx]
            critic_loss = cfg.value_coeff * float(np.mean(err**2))
            # steps where every vO-DU was masked carry no decision for the actor
            aidx = idx[decided[idx]]
            actor_loss = 0.0
            if len(aidx):
                logits, acache = agent.actor.forward(batch.obs[aidx])
                args = (
                    batch.masks[aidx], batch.actions[aidx], old_logp[aidx], adv[aidx],
                    cfg.clip_epsilon, cfg.entropy_coeff,
                )
                actor_loss = float(ppo_actor_loss(logits, *args))
            if not (np.isfinite(actor_loss) and np.isfinite(critic_loss)):
                raise NumericError("non-finite PPO loss; update aborted")
            if len(aidx):
                agrads, _ = agent.actor.backward(acache, ppo_actor_grad(logits, *args))
                agent.actor_opt.step(agrads)
            cgrads, _ = agent.critic.backward(ccache, (cfg.value_coeff * 2.0 * err / len(idx))[:, None])
            agent.critic_opt.step(cgrads)
            stats["actor_loss"] += actor_loss
            stats["critic_loss"] += critic_loss
            stats["updates"] += 1
    stats["actor_loss"] /= stats["updates"]
    stats["critic_loss"] /= stats["updates"]
    return stats
