"""Advantage estimation and multi-stream advantage combination."""

from __future__ import annotations

import numpy as np

STD_EPS = 1e-8
# standardized advantages are snapped to this grid so that rescaling a stream
# by any positive constant reproduces the combined output bit for bit
ADV_QUANTUM = 2.0**-20


def compute_gae(rewards, values, bootstrap, dones, gamma: float, gae_lambda: float):
    """Generalized advantage estimates and value targets.

    Arrays are time-major: ``rewards``, ``values`` and ``dones`` have shape
    ``(T,)`` or ``(T, n_envs)``; ``bootstrap`` is the value after the last step.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if not rewards.shape == values.shape == dones.shape:
        raise ValueError("rewards, values and dones must have the same shape")
    advantages = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap, dtype=np.float64)
    next_adv = np.zeros(rewards.shape[1:])
    for t in range(rewards.shape[0] - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        next_adv = delta + gamma * gae_lambda * not_done * next_adv
        advantages[t] = next_adv
        next_value = values[t]
    return advantages, advantages + values


def standardize(x) -> np.ndarray:
    """Zero mean, unit variance, snapped to ``ADV_QUANTUM``.

    The std guard is ``STD_EPS`` times the stream's largest magnitude rather
    than an absolute constant, so ``standardize(k * x)`` equals
    ``standardize(x)`` for every ``k > 0`` up to rounding; a constant stream
    still maps to zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    scale = np.max(np.abs(x)) if x.size else 0.0
    if scale == 0.0:
        return np.zeros_like(x)
    z = (x - x.mean()) / (x.std() + STD_EPS * scale)
    return np.round(z / ADV_QUANTUM) * ADV_QUANTUM


def combine_advantages(*streams, weights=None) -> np.ndarray:
    """Standardize each stream over the batch, then take the weighted sum."""
    if not streams:
        raise ValueError("need at least one advantage stream")
    shape = np.shape(streams[0])
    if any(np.shape(s) != shape for s in streams):
        raise ValueError("advantage streams must have equal lengths")
    weights = (1.0,) * len(streams) if weights is None else tuple(weights)
    out = np.zeros(shape)
    for w, s in zip(weights, streams):
        out = out + w * standardize(s)
    return out
