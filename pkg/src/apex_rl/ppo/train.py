"""Training loop: rollout, per-critic GAE, combined advantages, PPO update, eval."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..checkpoint import save_checkpoint
from ..config import RunConfig
from ..evaluation import evaluate_policy
from ..policy import CriticPair, GaussianPolicy, actor_obs_dim, critic_obs_dim
from ..priors import TrainingClock, decay_coeff
from .env import ChainEnvs
from .rollout import collect_rollout
from .update import Learner, compute_advantages, ppo_update

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "iteration", "clock", "decay_coeff",
    "mean_style_reward", "mean_task_reward", "mean_total_reward",
    "rmse_q", "rmse_h", "rmse_x_ee", "rmse_v", "eval_reward",
    "policy_loss", "value_loss_style", "value_loss_task", "entropy", "clip_fraction", "approx_kl",
)


def input_scales(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fixed per-entry observation multipliers for the actor and critic inputs."""
    n, net, v = cfg.n_joints, cfg.network, cfg.variant_config
    actor = [np.ones(n), np.full(n, net.qdot_obs_scale), np.full(n, net.action_obs_scale), np.ones(2)]
    if v.phase_in_actor:
        actor.append(np.ones(2))
    if v.ref_in_actor:
        actor.append(np.ones(n))
    actor = np.concatenate(actor)
    critic = np.concatenate([actor, np.ones(2), np.ones(n), np.full(n, net.qdot_obs_scale)])
    return actor, critic


def build_agent(cfg: RunConfig, rng: np.random.Generator) -> tuple[GaussianPolicy, CriticPair]:
    n, v, net = cfg.n_joints, cfg.variant_config, cfg.network
    actor_scale, critic_scale = input_scales(cfg)
    policy = GaussianPolicy.init(
        actor_obs_dim(n, v), n, net.hidden, rng, net.init_log_std, net.actor_output_scale, actor_scale,
    )
    critics = CriticPair.init(
        critic_obs_dim(n, v), net.hidden, rng, cfg.ppo.critic_mode, critic_scale, net.value_output_scale,
    )
    return policy, critics


@dataclass
class TrainResult:
    rows: list[dict]
    policy: GaussianPolicy
    critics: CriticPair
    clock: TrainingClock
    config: RunConfig
    aborted_updates: int = 0
    extras: dict = field(default_factory=dict)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_metrics(rows: list[dict], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in METRIC_COLUMNS])


def read_metrics(path) -> list[dict]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else math.nan) for k, v in r.items()} for r in rows]


def train(cfg: RunConfig, seed: int, metrics_path=None, checkpoint_path=None) -> TrainResult:
    """Train one seed of ``cfg``; optionally write the metrics CSV and checkpoint."""
    ppo = cfg.ppo
    seq = np.random.SeedSequence(seed)
    init_seq, act_seq, mb_seq, env_seq = seq.spawn(4)
    policy, critics = build_agent(cfg, np.random.default_rng(init_seq))
    learner = Learner(policy, critics, ppo)
    envs = ChainEnvs(cfg, ppo.n_envs, env_seq.spawn(ppo.n_envs))
    act_rng = np.random.default_rng(act_seq)
    mb_rng = np.random.default_rng(mb_seq)
    clock = TrainingClock(0)
    prior_cfg = cfg.prior if cfg.variant_config.prior_enabled else None
    gaits = cfg.gait_specs()

    rows = []
    aborted = 0
    for it in range(1, ppo.iterations + 1):
        buf = collect_rollout(envs, policy, critics, cfg.prior, clock, ppo.horizon, act_rng,
                              cfg.network.action_scale, ppo.gamma)
        adv = compute_advantages(buf, ppo, critics.mode)
        stats = ppo_update(learner, buf, adv, ppo, mb_rng)
        aborted += stats.aborted
        row = {
            "iteration": it,
            "clock": clock.t,
            "decay_coeff": decay_coeff(clock, prior_cfg) if prior_cfg is not None else 0.0,
            "mean_style_reward": float(np.mean(buf.reward_style)),
            "mean_task_reward": float(np.mean(buf.reward_task)),
            "mean_total_reward": float(np.mean(buf.reward_style + buf.reward_task)),
            "policy_loss": stats.policy_loss,
            "value_loss_style": stats.value_loss_style,
            "value_loss_task": stats.value_loss_task,
            "entropy": stats.entropy,
            "clip_fraction": stats.clip_fraction,
            "approx_kl": stats.approx_kl,
        }
        if it % cfg.env.eval_every == 0 or it == ppo.iterations:
            rep = evaluate_policy(policy, gaits, cfg.variant_config, cfg.chain, cfg.rewards,
                                  cfg.env.eval_steps, cfg.env.divergence_limit, cfg.network.action_scale)
            row.update(rep.as_dict())
        rows.append(row)
        if it % 50 == 0:
            log.info("seed %d it %d: style %.3f task %.3f c %.4f rmse_q %s", seed, it,
                     row["mean_style_reward"], row["mean_task_reward"], row["decay_coeff"], row.get("rmse_q"))

    if metrics_path is not None:
        write_metrics(rows, metrics_path)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, policy, critics, clock, cfg)
    return TrainResult(rows, policy, critics, clock, cfg, aborted)
