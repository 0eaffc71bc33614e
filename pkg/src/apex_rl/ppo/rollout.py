"""Rollout storage and collection with prior blending."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..policy import CriticPair, GaussianPolicy
from ..priors import PriorConfig, TrainingClock, blend, decay_coeff, prior_torque
from .env import ChainEnvs


@dataclass
class RolloutBuffer:
    """Time-major ``(horizon, n_envs, ...)`` arrays for one PPO iteration.

    ``action`` and ``log_prob`` are the policy's own sample ``a_t``; the
    blended torque ``u_t = scale * a_t + c_t * beta_t`` is kept separately in
    ``executed`` and is never fed to the likelihood. ``truncation_*`` holds the
    discounted value of the final state for steps that hit the time limit;
    it is added to the reward only inside GAE.
    """

    actor_obs: np.ndarray
    critic_obs: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray
    reward_style: np.ndarray
    reward_task: np.ndarray
    value_style: np.ndarray
    value_task: np.ndarray
    done: np.ndarray
    executed: np.ndarray
    prior: np.ndarray
    decay: np.ndarray
    truncation_style: np.ndarray
    truncation_task: np.ndarray
    bootstrap_style: np.ndarray | None = None
    bootstrap_task: np.ndarray | None = None
    filled: int = 0

    @classmethod
    def allocate(cls, horizon: int, n_envs: int, actor_dim: int, critic_dim: int, act_dim: int):
        def z(*shape):
            return np.zeros((horizon, n_envs, *shape))

        return cls(
            actor_obs=z(actor_dim), critic_obs=z(critic_dim), action=z(act_dim), log_prob=z(),
            reward_style=z(), reward_task=z(), value_style=z(), value_task=z(),
            done=np.zeros((horizon, n_envs), dtype=bool), executed=z(act_dim), prior=z(act_dim),
            decay=np.zeros(horizon), truncation_style=z(), truncation_task=z(),
        )

    @property
    def horizon(self) -> int:
        return self.action.shape[0]

    @property
    def n_envs(self) -> int:
        return self.action.shape[1]

    @property
    def full(self) -> bool:
        return self.filled == self.horizon


def stream_values(critics: CriticPair, obs) -> tuple[np.ndarray, np.ndarray]:
    """Value predictions mapped onto the (style, task) buffer slots.

    In single-critic mode the one network's prediction goes in the task slot
    and the style slot is zero.
    """
    vals = critics.values(obs)
    if critics.mode == "multi":
        return vals["style"], vals["task"]
    return np.zeros_like(vals["total"]), vals["total"]


def collect_rollout(envs: ChainEnvs, policy: GaussianPolicy, critics: CriticPair, prior: PriorConfig,
                    clock: TrainingClock, horizon: int, rng: np.random.Generator,
                    action_scale: float = 1.0, gamma: float | None = None) -> RolloutBuffer:
    """Run ``horizon`` lockstep steps of every environment.

    The policy samples in normalized units; ``action_scale * a_t`` is the
    torque it contributes before the prior is blended in. When ``gamma`` is
    given, time-limit truncations add ``gamma * V(s_final)`` to the reward of
    the truncated step, per critic stream.
    """
    use_prior = envs.variant.prior_enabled and prior.enabled
    actor_dim = policy.mean_net.in_dim
    critic_dim = next(iter(critics.nets.values())).in_dim
    buf = RolloutBuffer.allocate(horizon, envs.n_envs, actor_dim, critic_dim, policy.act_dim)
    for h in range(horizon):
        actor_obs, critic_obs, q_ref = envs.observations()
        a, logp = policy.act(actor_obs, rng)
        v_style, v_task = stream_values(critics, critic_obs)
        beta = prior_torque(envs.kp, q_ref, envs.q)
        c = decay_coeff(clock, prior) if use_prior else 0.0
        u = blend(action_scale * a, beta, c)
        with np.errstate(invalid="ignore", over="ignore"):
            r_style, r_task, done, _ = envs.step(action_scale * a, u)
        if gamma is not None and envs.terminal_critic_obs is not None:
            tail_style, tail_task = stream_values(critics, envs.terminal_critic_obs)
            buf.truncation_style[h, envs.last_timeout] = gamma * tail_style
            buf.truncation_task[h, envs.last_timeout] = gamma * tail_task

        buf.actor_obs[h] = actor_obs
        buf.critic_obs[h] = critic_obs
        buf.action[h] = a
        buf.log_prob[h] = logp
        buf.value_style[h] = v_style
        buf.value_task[h] = v_task
        buf.reward_style[h] = r_style
        buf.reward_task[h] = r_task
        buf.done[h] = done
        buf.executed[h] = u
        buf.prior[h] = beta
        buf.decay[h] = c
        buf.filled = h + 1
        clock.advance(1)
    _, critic_obs, _ = envs.observations()
    buf.bootstrap_style, buf.bootstrap_task = stream_values(critics, critic_obs)
    return buf
