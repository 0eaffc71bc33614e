"""Per-step rewards split into a style group and a task+regularization group.

Chain analogues of the legged-robot terms:

============================  =====================================
legged term                   chain quantity
============================  =====================================
base linear velocity          tip horizontal velocity ``v_x``
base angular velocity         tip angular rate (sum of joint rates)
base orientation              absolute angle of the last link
end-effector (foot) position  tip position ``(x, z)``
base height                   tip height ``z``
feet slip                     not modelled (no contacts)
============================  =====================================

Rewards are per control step and are not multiplied by ``dt``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .dynamics import ChainParams, ChainState, forward_kinematics, tip_angle, tip_velocity
from .reference import GaitSpec

STYLE_TERMS = ("joint_track", "ee_track", "orient_track")
TASK_TRACKING_TERMS = ("lin_vel", "ang_vel")
TASK_PENALTY_TERMS = ("torque", "action_rate", "height")


class RewardConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    lin_vel_weight: float = 1.0
    lin_vel_sigma: float = 0.3
    ang_vel_weight: float = 0.9
    ang_vel_sigma: float = 0.25
    torque_weight: float = -0.0001
    action_rate_weight: float = -0.01
    height_weight: float = -30.0
    joint_track_weight: float = 1.5
    joint_track_sigma: float = 0.01
    ee_track_weight: float = 1.5
    ee_track_sigma: float = 0.01
    orient_track_weight: float = 1.5
    orient_track_sigma: float = 0.15

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise RewardConfigError(f"{f.name} must be finite")
            if f.name.endswith("_sigma") and v <= 0:
                raise RewardConfigError(f"{f.name} must be > 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RewardConfig":
        return cls(**d)


@dataclass(frozen=True)
class RewardGroups:
    style: float
    task: float


def tracking_kernel(e, sigma: float):
    """``exp(-||e||^2 / sigma)`` over the last axis of ``e``."""
    if not sigma > 0:
        raise RewardConfigError(f"sigma must be > 0, got {sigma}")
    e = np.asarray(e, dtype=np.float64)
    sq = e * e if e.ndim == 0 else np.sum(e * e, axis=-1)
    return np.exp(-sq / sigma)


def _scalar_kernel(e, sigma: float):
    # scalar error per batch entry: add a trailing axis so the batch is not reduced
    return tracking_kernel(np.asarray(e, dtype=np.float64)[..., None], sigma)


def style_terms(q, q_ref, tip, tip_ref, cfg: RewardConfig):
    """Batched style reward from raw arrays (joint axis / xz axis last)."""
    return (
        cfg.joint_track_weight * tracking_kernel(q - q_ref, cfg.joint_track_sigma)
        + cfg.ee_track_weight * tracking_kernel(tip - tip_ref, cfg.ee_track_sigma)
        + cfg.orient_track_weight * _scalar_kernel(tip_angle(q) - tip_angle(q_ref), cfg.orient_track_sigma)
    )


def task_terms(tip_vx, tip_omega, tip_z, torque, action, prev_action,
               velocity_cmd, angular_cmd, height_cmd, cfg: RewardConfig):
    """Batched task+regularization reward; commands broadcast against the batch."""
    tracking = (
        cfg.lin_vel_weight * _scalar_kernel(tip_vx - velocity_cmd, cfg.lin_vel_sigma)
        + cfg.ang_vel_weight * _scalar_kernel(tip_omega - angular_cmd, cfg.ang_vel_sigma)
    )
    rate = action - prev_action
    penalties = (
        cfg.torque_weight * np.sum(torque * torque, axis=-1)
        + cfg.action_rate_weight * np.sum(rate * rate, axis=-1)
        + cfg.height_weight * (tip_z - height_cmd) ** 2
    )
    return tracking + penalties


def style_reward(state: ChainState, ref, cfg: RewardConfig, params: ChainParams) -> float:
    q_ref, _, tip_ref = ref
    tip = np.stack(forward_kinematics(state.q, params), axis=-1)
    return float(style_terms(state.q, np.asarray(q_ref), tip, np.asarray(tip_ref), cfg))


def task_reward(state: ChainState, gait: GaitSpec, torque, action, prev_action,
                cfg: RewardConfig, params: ChainParams) -> float:
    vx, _ = tip_velocity(state.q, state.qdot, params)
    _, z = forward_kinematics(state.q, params)
    omega = np.sum(state.qdot, axis=-1)
    return float(task_terms(
        vx, omega, z, np.asarray(torque, float), np.asarray(action, float), np.asarray(prev_action, float),
        gait.velocity_cmd, gait.angular_cmd, gait.tip_height_cmd, cfg,
    ))


def reward_groups(state: ChainState, ref, gait: GaitSpec, torque, action, prev_action,
                  cfg: RewardConfig, params: ChainParams) -> RewardGroups:
    return RewardGroups(
        style=style_reward(state, ref, cfg, params),
        task=task_reward(state, gait, torque, action, prev_action, cfg, params),
    )


def scale_config(cfg: RewardConfig, sigma_scale: float, weight_scale: float, group: str) -> RewardConfig:
    """Copy of ``cfg`` with one group's sensitivities and weights rescaled."""
    if sigma_scale <= 0 or weight_scale <= 0:
        raise RewardConfigError("scales must be > 0")
    if group == "style":
        sigma_terms, weight_terms = STYLE_TERMS, STYLE_TERMS
    elif group == "task":
        sigma_terms, weight_terms = TASK_TRACKING_TERMS, TASK_TRACKING_TERMS + TASK_PENALTY_TERMS
    else:
        raise RewardConfigError(f"group must be 'style' or 'task', got {group!r}")
    changes = {f"{t}_sigma": getattr(cfg, f"{t}_sigma") * sigma_scale for t in sigma_terms}
    changes.update({f"{t}_weight": getattr(cfg, f"{t}_weight") * weight_scale for t in weight_terms})
    return dataclasses.replace(cfg, **changes)
