"""PPO and ACER agents over the allocation env."""

from __future__ import annotations

import numpy as np

from ..nn import load_checkpoint, save_checkpoint
from .acer import AcerAgent, AcerConfig
from .policy import masked_softmax
from .ppo import PpoAgent, PpoConfig
from .rollout import collect_rollout, evaluate_policy

AGENTS = {"ppo": (PpoAgent, PpoConfig), "acer": (AcerAgent, AcerConfig)}


def make_agent(algo: str, obs_size: int, n_actions: int, config=None, seed=0):
    try:
        cls, cfg_cls = AGENTS[algo]
    except KeyError:
        raise ValueError(f"unknown agent {algo!r}; choose from {sorted(AGENTS)}") from None
    return cls(obs_size, n_actions, config or cfg_cls(), seed=seed)


def train_agent(agent, env, total_steps: int, seed=0, on_episode=None, should_stop=None) -> int:
    """Alternate collection and updates until ``total_steps`` env steps are taken.

    ``on_episode(step, summary)`` fires for every finished episode with the
    global step count at its last transition. ``should_stop()`` is polled
    before each batch. The last batch is shortened so exactly ``total_steps``
    steps are taken (fewer only if stopped early). Returns the steps taken.
    """
    rng = np.random.default_rng(seed)
    steps = 0
    while steps < total_steps and not (should_stop and should_stop()):
        batch = agent.collect(env, rng, n_steps=min(agent.config.rollout_steps, total_steps - steps))
        if on_episode is not None:
            for i, summary in batch.episodes:
                on_episode(steps + i + 1, summary)
        steps += len(batch)
        agent.update(batch, rng)
    return steps


def save_agent(path, agent, meta=None):
    save_checkpoint(
        path,
        {"actor": agent.actor, "critic": agent.critic},
        {"actor": agent.actor_opt, "critic": agent.critic_opt},
        meta=meta,
    )


def load_actor(path):
    nets, _, meta = load_checkpoint(path)
    return nets["actor"], meta


__all__ = [
    "AcerAgent", "AcerConfig", "PpoAgent", "PpoConfig", "collect_rollout", "evaluate_policy",
    "load_actor", "make_agent", "masked_softmax", "save_agent", "train_agent",
]
