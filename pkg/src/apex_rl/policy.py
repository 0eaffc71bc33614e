"""Gaussian MLP actor, value networks, variant flags and observation layouts.

Networks are plain numpy with hand-written reverse mode. Weight matrices are
stored ``(fan_in, fan_out)`` so a batch ``x`` of shape ``(B, fan_in)`` maps
through ``x @ W + b``.

Actor observation layout (fixed order)::

    [q (n), qdot (n), prev_action (n), velocity_cmd, selector]
    + [sin 2*pi*phase, cos 2*pi*phase]      if variant.phase_in_actor
    + [q_ref (n)]                           if variant.ref_in_actor

Critic observation: ``actor_obs + [tip_vx, tip_vz, q_ref (n), qdot_ref (n)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ChainState
from .reference import GaitSpec, SkillSelector, phase_features, reference_angles

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class NumericError(FloatingPointError):
    pass


class MLP:
    """tanh hidden layers, identity output."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], input_scale=None):
        if len(weights) != len(biases):
            raise ValueError("one bias per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match {w.shape}")
            if i and weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input {w.shape[0]} != previous output {weights[i - 1].shape[1]}")
        self.weights = weights
        self.biases = biases
        n_in = weights[0].shape[0]
        self.input_scale = np.ones(n_in) if input_scale is None else np.asarray(input_scale, dtype=np.float64)
        if self.input_scale.shape != (n_in,):
            raise ValueError("input_scale must match the input layer")

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator, output_scale: float = 1.0, input_scale=None) -> "MLP":
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            w = rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
            if i == len(layer_sizes) - 2:
                w *= output_scale
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, input_scale)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x, keep: bool = False):
        h = np.asarray(x, dtype=np.float64) * self.input_scale
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, grad_out) -> list[np.ndarray]:
        """Gradients for ``parameters()`` given ``dL/d(output)``."""
        g = np.asarray(grad_out, dtype=np.float64)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i:
                g = g @ self.weights[i].T
        return grads

    def gradients(self, x, loss_seed) -> list[np.ndarray]:
        _, acts = self.forward(np.atleast_2d(x), keep=True)
        return self.backward(acts, np.atleast_2d(loss_seed))

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.input_scale.copy())


class GaussianPolicy:
    """Diagonal Gaussian with MLP mean and state-independent log-std."""

    def __init__(self, mean_net: MLP, log_std):
        self.mean_net = mean_net
        self.log_std = np.asarray(log_std, dtype=np.float64)
        if self.log_std.shape != (mean_net.layer_sizes[-1],):
            raise ValueError("log_std must have one entry per action dimension")

    @classmethod
    def init(cls, obs_dim: int, act_dim: int, hidden, rng, log_std: float = 0.0,
             output_scale: float = 0.01, input_scale=None) -> "GaussianPolicy":
        net = MLP.init([obs_dim, *hidden, act_dim], rng, output_scale, input_scale)
        return cls(net, np.full(act_dim, log_std))

    @property
    def act_dim(self) -> int:
        return self.log_std.shape[0]

    def parameters(self) -> list[np.ndarray]:
        return self.mean_net.parameters() + [self.log_std]

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def mean(self, obs) -> np.ndarray:
        mu = self.mean_net.forward(obs)
        if not np.all(np.isfinite(mu)):
            raise NumericError("actor produced a non-finite mean")
        return mu

    def log_prob_from_mean(self, mu, action) -> np.ndarray:
        z = (action - mu) * np.exp(-self.log_std)
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std) - self.act_dim * _HALF_LOG_2PI

    def log_prob(self, obs, action) -> np.ndarray:
        return self.log_prob_from_mean(self.mean(obs), np.asarray(action, dtype=np.float64))

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + self.act_dim * (0.5 + _HALF_LOG_2PI))

    def act(self, obs, rng: np.random.Generator, deterministic: bool = False):
        mu = self.mean(obs)
        if deterministic:
            a = mu
        else:
            a = mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)
        return a, self.log_prob_from_mean(mu, a)


def act(policy: GaussianPolicy, obs, rng: np.random.Generator):
    return policy.act(obs, rng)


class CriticPair:
    """Value networks keyed by reward stream.

    Multi-critic mode holds ``style`` and ``task``; the single-critic ablation
    holds one ``total`` network regressing the summed reward.
    """

    def __init__(self, nets: dict[str, MLP], value_scale: float = 1.0):
        dims = {net.in_dim for net in nets.values()}
        if len(dims) != 1:
            raise ValueError("all critics must share the critic observation dimension")
        if set(nets) not in ({"style", "task"}, {"total"}):
            raise ValueError("critics must be {'style', 'task'} or {'total'}")
        self.nets = dict(nets)
        # fixed output multiplier; lets small-init networks reach return magnitudes
        self.value_scale = float(value_scale)

    @classmethod
    def init(cls, obs_dim: int, hidden, rng, mode: str = "multi", input_scale=None,
             value_scale: float = 1.0) -> "CriticPair":
        streams = ("style", "task") if mode == "multi" else ("total",)
        nets = {s: MLP.init([obs_dim, *hidden, 1], rng, 1.0, input_scale) for s in streams}
        return cls(nets, value_scale)

    @property
    def streams(self) -> tuple[str, ...]:
        return tuple(self.nets)

    @property
    def mode(self) -> str:
        return "multi" if len(self.nets) == 2 else "single"

    @property
    def v_style(self) -> MLP:
        return self.nets["style"]

    @property
    def v_task(self) -> MLP:
        return self.nets["task"]

    def values(self, obs) -> dict[str, np.ndarray]:
        return {s: self.value_scale * net.forward(obs)[..., 0] for s, net in self.nets.items()}


@dataclass(frozen=True)
class VariantConfig:
    name: str
    prior_enabled: bool
    phase_in_actor: bool
    ref_in_actor: bool
    rsi_enabled: bool


VARIANTS: dict[str, VariantConfig] = {
    "APEX": VariantConfig("APEX", True, False, False, False),
    "APEX_Full": VariantConfig("APEX_Full", True, True, True, True),
    "DM_Full": VariantConfig("DM_Full", False, True, True, True),
    "DM_NIA": VariantConfig("DM_NIA", False, True, False, True),
}


def get_variant(name: str) -> VariantConfig:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; expected one of {', '.join(VARIANTS)}") from None


def actor_obs_dim(n_joints: int, variant: VariantConfig) -> int:
    return 3 * n_joints + 2 + (2 if variant.phase_in_actor else 0) + (n_joints if variant.ref_in_actor else 0)


def critic_obs_dim(n_joints: int, variant: VariantConfig) -> int:
    return actor_obs_dim(n_joints, variant) + 2 + 2 * n_joints


def actor_obs_from_arrays(q, qdot, prev_action, velocity_cmd, selector, variant: VariantConfig,
                          phase_feats=None, q_ref=None) -> np.ndarray:
    """Batched actor observations; scalar command/selector entries broadcast."""
    q = np.asarray(q, dtype=np.float64)
    lead = q.shape[:-1]
    parts = [
        q, qdot, prev_action,
        np.broadcast_to(np.asarray(velocity_cmd, dtype=np.float64), lead)[..., None],
        np.broadcast_to(np.asarray(selector, dtype=np.float64), lead)[..., None],
    ]
    if variant.phase_in_actor:
        parts.append(np.broadcast_to(phase_feats, lead + (2,)))
    if variant.ref_in_actor:
        parts.append(q_ref)
    return np.concatenate(parts, axis=-1)


def build_actor_obs(state: ChainState, gait: GaitSpec, selector: SkillSelector, prev_action,
                    variant: VariantConfig, episode_time: float) -> np.ndarray:
    phase_feats = phase_features(gait, episode_time) if variant.phase_in_actor else None
    q_ref = reference_angles(gait, episode_time)[0] if variant.ref_in_actor else None
    return actor_obs_from_arrays(
        state.q, state.qdot, np.asarray(prev_action, dtype=np.float64),
        gait.velocity_cmd, selector.value, variant, phase_feats, q_ref,
    )


def build_critic_obs(actor_obs, state: ChainState, ref_sample, tip_velocity) -> np.ndarray:
    q_ref, qdot_ref = ref_sample[0], ref_sample[1]
    return np.concatenate([
        np.asarray(actor_obs, dtype=np.float64),
        np.asarray(tip_velocity, dtype=np.float64),
        np.asarray(q_ref, dtype=np.float64),
        np.asarray(qdot_ref, dtype=np.float64),
    ], axis=-1)
