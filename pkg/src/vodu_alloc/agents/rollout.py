from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import AllocationEnv, EpisodeSummary
from .policy import masked_softmax, sample


@dataclass
class RolloutBatch:
    obs: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    behavior_probs: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    next_obs: np.ndarray
    next_masks: np.ndarray
    values: np.ndarray = None
    last_value: float = 0.0
    episodes: list = field(default_factory=list)  # (index of final step, EpisodeSummary)
    transitions: list = field(default_factory=list)

    def __len__(self):
        return len(self.actions)


def as_rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def ensure_started(env: AllocationEnv, rng):
    if env.instance is None or env.done:
        env.reset(seed=int(rng.integers(2**63)))


def collect_rollout(env: AllocationEnv, actor, n_steps: int, seed=None, critic=None) -> RolloutBatch:
    """Sample ``n_steps`` transitions from the masked-softmax policy.

    Finished episodes are reset with seeds drawn from ``seed``'s generator, so
    the batch is a deterministic function of the env state and the seed.
    ``critic`` (a one-output network) fills in state values when given.
    """
    rng = as_rng(seed)
    ensure_started(env, rng)
    transitions, episodes = [], []
    for i in range(n_steps):
        obs = env.observe()
        mask = env.action_mask()
        if mask.any():
            probs = masked_softmax(actor(obs), mask)
            action = sample(probs, rng)
        else:
            probs = np.full(env.n_actions, 1.0 / env.n_actions)
            action = 0
        transitions.append(env.step(action, behavior_probs=probs))
        if env.done:
            episodes.append((i, env.summary))
            env.reset(seed=int(rng.integers(2**63)))
    batch = RolloutBatch(
        obs=np.array([t.obs for t in transitions]),
        masks=np.array([t.mask for t in transitions]),
        actions=np.array([t.action for t in transitions], dtype=int),
        behavior_probs=np.array([t.behavior_probs for t in transitions]),
        rewards=np.array([t.reward for t in transitions]),
        terminals=np.array([t.terminal for t in transitions], dtype=bool),
        next_obs=np.array([t.next_obs for t in transitions]),
        next_masks=np.array([t.next_mask for t in transitions]),
        episodes=episodes,
        transitions=transitions,
    )
    if critic is not None:
        batch.values = critic(batch.obs)[:, 0]
        batch.last_value = 0.0 if batch.terminals[-1] else float(critic(batch.next_obs[-1])[0])
    return batch


def evaluate_policy(env: AllocationEnv, actor, seed=None, instance_index=None) -> EpisodeSummary:
    """Run one episode choosing the most probable unmasked action."""
    env.reset(seed=seed, instance_index=instance_index)
    while not env.done:
        mask = env.action_mask()
        action = int(np.argmax(masked_softmax(actor(env.observe()), mask))) if mask.any() else 0
        env.step(action)
    return env.summary
