"""Clipped-surrogate PPO update with one TD regression per critic."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..config import PPOConfig
from ..policy import CriticPair, GaussianPolicy
from .gae import combine_advantages, compute_gae
from .optim import Adam
from .rollout import RolloutBuffer

log = logging.getLogger(__name__)


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss_style: float
    value_loss_task: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    aborted: bool = False


@dataclass
class Advantages:
    combined: np.ndarray  # (horizon * n_envs,)
    returns: dict[str, np.ndarray]  # per critic stream, flattened


class Learner:
    """Networks plus their optimizers; the single writer during updates."""

    def __init__(self, policy: GaussianPolicy, critics: CriticPair, cfg: PPOConfig):
        self.policy = policy
        self.critics = critics
        self.actor_opt = Adam(policy.parameters(), cfg.lr, max_grad_norm=cfg.max_grad_norm)
        self.critic_opts = {
            s: Adam(net.parameters(), cfg.lr, max_grad_norm=cfg.max_grad_norm)
            for s, net in critics.nets.items()
        }

    def _all(self):
        params = list(self.policy.parameters())
        opts = [self.actor_opt]
        for s, net in self.critics.nets.items():
            params += net.parameters()
            opts.append(self.critic_opts[s])
        return params, opts

    def snapshot(self):
        params, opts = self._all()
        return [p.copy() for p in params], [o.state() for o in opts]

    def restore(self, snap) -> None:
        params, opts = self._all()
        for p, saved in zip(params, snap[0]):
            p[...] = saved
        for o, saved in zip(opts, snap[1]):
            o.restore(saved)


def compute_advantages(buf: RolloutBuffer, cfg: PPOConfig, mode: str) -> Advantages:
    if not buf.full:
        raise ValueError("advantages need a full rollout buffer")
    g, lam = cfg.gamma, cfg.gae_lambda
    if mode == "multi":
        a_style, ret_style = compute_gae(buf.reward_style + buf.truncation_style, buf.value_style, buf.bootstrap_style, buf.done, g, lam)
        a_task, ret_task = compute_gae(buf.reward_task + buf.truncation_task, buf.value_task, buf.bootstrap_task, buf.done, g, lam)
        combined = combine_advantages(
            a_style.ravel(), a_task.ravel(), weights=(cfg.style_adv_weight, cfg.task_adv_weight)
        )
        return Advantages(combined, {"style": ret_style.ravel(), "task": ret_task.ravel()})
    total = buf.reward_style + buf.reward_task + buf.truncation_task
    a_total, ret_total = compute_gae(total, buf.value_task, buf.bootstrap_task, buf.done, g, lam)
    return Advantages(combine_advantages(a_total.ravel()), {"total": ret_total.ravel()})


def clipped_objective(ratio, adv, clip_eps: float) -> np.ndarray:
    """Per-sample ``min(r*A, clip(r, 1-eps, 1+eps)*A)``."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


def actor_loss_and_grads(policy: GaussianPolicy, obs, actions, old_logp, adv, clip_eps: float,
                         entropy_coef: float):
    mu, acts = policy.mean_net.forward(obs, keep=True)
    inv_var = np.exp(-2.0 * policy.log_std)
    diff = actions - mu
    logp = policy.log_prob_from_mean(mu, actions)
    ratio = np.exp(logp - old_logp)
    surr = ratio * adv
    surr_clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    m = len(adv)
    entropy = policy.entropy()
    loss = -np.mean(np.minimum(surr, surr_clipped)) - entropy_coef * entropy

    # gradient flows only through samples where the unclipped term is the minimum
    active = surr <= surr_clipped
    dlogp = np.where(active, -adv * ratio / m, 0.0)
    dmu = dlogp[:, None] * diff * inv_var
    grads = policy.mean_net.backward(acts, dmu)
    dlog_std = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - entropy_coef
    stats = {
        "loss": float(loss),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        "approx_kl": float(np.mean((ratio - 1.0) - (logp - old_logp))),
        "entropy": entropy,
        "ratio": ratio,
    }
    return grads + [dlog_std], stats


def value_loss_and_grads(critics: CriticPair, stream: str, obs, returns):
    net = critics.nets[stream]
    out, acts = net.forward(obs, keep=True)
    v = critics.value_scale * out[:, 0]
    err = v - returns
    loss = float(np.mean(err * err))
    seed = (2.0 * critics.value_scale / len(returns)) * err[:, None]
    return net.backward(acts, seed), loss


def ppo_update(learner: Learner, buf: RolloutBuffer, adv: Advantages, cfg: PPOConfig,
               rng: np.random.Generator) -> UpdateStats:
    policy, critics = learner.policy, learner.critics
    n = buf.horizon * buf.n_envs
    actor_obs = buf.actor_obs.reshape(n, -1)
    critic_obs = buf.critic_obs.reshape(n, -1)
    actions = buf.action.reshape(n, -1)
    old_logp = buf.log_prob.reshape(n)
    mb = n // cfg.minibatches

    snap = learner.snapshot()
    sums = {"policy": 0.0, "entropy": 0.0, "clip": 0.0, "kl": 0.0}
    vsums = {s: 0.0 for s in critics.streams}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for k in range(cfg.minibatches):
            idx = order[k * mb:(k + 1) * mb]
            grads, st = actor_loss_and_grads(
                policy, actor_obs[idx], actions[idx], old_logp[idx], adv.combined[idx],
                cfg.clip_eps, cfg.entropy_coef,
            )
            vgrads = {}
            vloss = {}
            for s in critics.streams:
                vgrads[s], vloss[s] = value_loss_and_grads(critics, s, critic_obs[idx], adv.returns[s][idx])
            finite = np.isfinite(st["loss"]) and all(np.isfinite(v) for v in vloss.values())
            finite = finite and all(np.all(np.isfinite(g)) for g in grads)
            if not finite:
                learner.restore(snap)
                log.warning("non-finite PPO loss (policy %r, values %r); parameters rolled back", st["loss"], vloss)
                return UpdateStats(float("nan"), float("nan"), float("nan"), policy.entropy(), 0.0, 0.0, True)
            learner.actor_opt.step(grads)
            policy.clamp_log_std()
            for s in critics.streams:
                learner.critic_opts[s].step(vgrads[s])
            sums["policy"] += st["loss"]
            sums["entropy"] += st["entropy"]
            sums["clip"] += st["clip_fraction"]
            sums["kl"] += st["approx_kl"]
            for s in critics.streams:
                vsums[s] += vloss[s]
            count += 1
    if critics.mode == "multi":
        v_style, v_task = vsums["style"] / count, vsums["task"] / count
    else:
        v_style, v_task = 0.0, vsums["total"] / count
    return UpdateStats(
        policy_loss=sums["policy"] / count,
        value_loss_style=v_style,
        value_loss_task=v_task,
        entropy=sums["entropy"] / count,
        clip_fraction=sums["clip"] / count,
        approx_kl=sums["kl"] / count,
    )
