"""Masked categorical policy helpers shared by both agents.

All functions accept logits with arbitrary leading dimensions; the action
axis is the last one. Masked actions get probability exactly zero.
"""

from __future__ import annotations

import numpy as np


def masked_log_softmax(logits, mask):
    logits = np.asarray(logits, dtype=float)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    masked = np.where(mask, logits, -np.inf)
    top = np.max(masked, axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    shifted = masked - top
    with np.errstate(divide="ignore"):
        norm = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    return np.where(mask, shifted - norm, -np.inf)


def masked_softmax(logits, mask):
    logp = masked_log_softmax(logits, mask)
    return np.where(np.isfinite(logp), np.exp(logp), 0.0)


def entropy(probs, logp):
    """Entropy over unmasked actions."""
    safe = np.where(probs > 0, logp, 0.0)
    return -np.sum(probs * safe, axis=-1)


def entropy_grad(probs, logp):
    """d entropy / d logits."""
    safe = np.where(probs > 0, logp, 0.0)
    h = -np.sum(probs * safe, axis=-1, keepdims=True)
    return -probs * (safe + h)


def sample(probs, rng) -> int:
    cdf = np.cumsum(probs)
    # zero-probability entries span empty intervals of the CDF
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, len(probs) - 1)


def greedy_action(probs) -> int:
    return int(np.argmax(probs))


def action_probs(actor, obs, mask):
    return masked_softmax(actor(obs), mask)
