"""Deterministic evaluation rollouts, RMSE reports and gait phase recovery."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.signal import find_peaks

from .dynamics import ChainParams, ChainState, clamp_torque, integrate
from .policy import GaussianPolicy, VariantConfig, actor_obs_from_arrays
from .reference import GAIT_PATTERNS, GaitSpec, phase_features, reference_angles
from .rewards import RewardConfig, style_terms, task_terms


@dataclass(frozen=True)
class EvalReport:
    q: float
    h: float
    x_ee: float
    v: float
    reward: float

    def as_dict(self) -> dict:
        return {"rmse_q": self.q, "rmse_h": self.h, "rmse_x_ee": self.x_ee, "rmse_v": self.v,
                "eval_reward": self.reward}


@dataclass
class EvalTrace:
    t: np.ndarray  # (T,) time of each recorded post-step state
    q: np.ndarray
    qdot: np.ndarray
    q_ref: np.ndarray
    tip: np.ndarray
    tip_ref: np.ndarray
    tip_vel: np.ndarray
    reward: np.ndarray
    decay: np.ndarray


Plant = Callable[[np.ndarray, np.ndarray, np.ndarray, float], tuple[np.ndarray, np.ndarray]]


def physics_plant(params: ChainParams) -> Plant:
    def plant(q, qdot, torque, t):
        return integrate(q, qdot, clamp_torque(torque, params), params)

    return plant


def eval_rollout(actor: Callable[[np.ndarray], np.ndarray], gait: GaitSpec, selector: float,
                 variant: VariantConfig, params: ChainParams, rewards: RewardConfig, steps: int,
                 start: ChainState | None = None, t0: float = 0.0, plant: Plant | None = None,
                 divergence_limit: float = 4 * np.pi) -> EvalTrace:
    """Roll out ``actor`` (obs -> torque) with the prior switched off.

    The executed torque is the actor output plus ``0 * prior``: evaluation is
    the deployment path, so the decay coefficient is pinned to zero and
    asserted as such.
    """
    from .ppo.env import tip_kinematics, tip_position

    plant = plant or physics_plant(params)
    n = params.n_joints
    if start is None:
        start = ChainState.rest(n)
    q, qdot = start.q.copy(), start.qdot.copy()
    prev_a = np.zeros(n)
    decay = 0.0
    out = {k: [] for k in ("t", "q", "qdot", "q_ref", "tip", "tip_ref", "tip_vel", "reward", "decay")}
    t = t0
    for _ in range(steps):
        q_ref, _ = reference_angles(gait, t)
        phase = phase_features(gait, t) if variant.phase_in_actor else None
        obs = actor_obs_from_arrays(q, qdot, prev_a, gait.velocity_cmd, selector, variant, phase, q_ref)
        a = np.asarray(actor(obs), dtype=np.float64)
        assert decay == 0.0
        u = a + decay * (q_ref - q)
        q_new, qdot_new = plant(q, qdot, u, t)
        t = t + params.dt
        q_ref_new, _ = reference_angles(gait, t)
        if not (np.all(np.isfinite(q_new)) and np.all(np.abs(q_new) <= divergence_limit)):
            # diverged: restart from the initial state, as training does
            q_new, qdot_new = start.q.copy(), start.qdot.copy()
        tip, tip_vel = tip_kinematics(q_new, qdot_new, params.link_lengths)
        tip_ref = tip_position(q_ref_new, params.link_lengths)
        r = style_terms(q_new, q_ref_new, tip, tip_ref, rewards) + task_terms(
            tip_vel[0], np.sum(qdot_new), tip[1], clamp_torque(u, params), a, prev_a,
            gait.velocity_cmd, gait.angular_cmd, gait.tip_height_cmd, rewards,
        )
        for k, v in (("t", t), ("q", q_new), ("qdot", qdot_new), ("q_ref", q_ref_new), ("tip", tip),
                     ("tip_ref", tip_ref), ("tip_vel", tip_vel), ("reward", r), ("decay", decay)):
            out[k].append(v)
        q, qdot, prev_a = q_new, qdot_new, a
    return EvalTrace(**{k: np.asarray(v, dtype=np.float64) for k, v in out.items()})


def report(trace: EvalTrace, gait: GaitSpec) -> EvalReport:
    """RMSE of joints and tip against the reference, height and velocity against commands."""
    return EvalReport(
        q=float(np.sqrt(np.mean((trace.q - trace.q_ref) ** 2))),
        h=float(np.sqrt(np.mean((trace.tip[:, 1] - gait.tip_height_cmd) ** 2))),
        x_ee=float(np.sqrt(np.mean(np.sum((trace.tip - trace.tip_ref) ** 2, axis=-1)))),
        v=float(np.sqrt(np.mean((trace.tip_vel[:, 0] - gait.velocity_cmd) ** 2))),
        reward=float(np.mean(trace.reward)),
    )


def mean_report(reports: list[EvalReport]) -> EvalReport:
    return EvalReport(*(float(np.mean([getattr(r, f) for r in reports])) for f in ("q", "h", "x_ee", "v", "reward")))


def policy_actor(policy: GaussianPolicy, action_scale: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Deterministic torque map: the scaled Gaussian mean."""
    def actor(obs):
        return action_scale * policy.mean(obs[None])[0]

    return actor


def start_state(variant: VariantConfig, gait: GaitSpec, n_joints: int) -> tuple[ChainState, float]:
    """Deterministic evaluation start, shared by every variant: the reference state at t=0."""
    q, qdot = reference_angles(gait, 0.0)
    return ChainState(q, qdot), 0.0


def evaluate_policy(policy: GaussianPolicy, gaits: list[GaitSpec], variant: VariantConfig,
                    params: ChainParams, rewards: RewardConfig, steps: int,
                    divergence_limit: float = 4 * np.pi, action_scale: float = 1.0) -> EvalReport:
    """Mean report over every configured gait, each with its own selector value."""
    reports = []
    for m, gait in enumerate(gaits):
        start, t0 = start_state(variant, gait, params.n_joints)
        trace = eval_rollout(policy_actor(policy, action_scale), gait, m / len(gaits), variant, params, rewards, steps,
                             start, t0, divergence_limit=divergence_limit)
        reports.append(report(trace, gait))
    return mean_report(reports)


# --- gait phase recovery ------------------------------------------------------------


def extract_phase_offsets(q_traj, dt: float, n_groups: int = 4, min_peaks: int = 3,
                          amplitude_floor: float = 1e-3):
    """Per-group phase offsets (turns, relative to group 0) from joint traces.

    Joint ``g`` stands for group ``g``. Peaks are found with
    ``scipy.signal.find_peaks``; the oscillation period is the median peak
    spacing of group 0. Returns ``(offsets, frequency)`` with ``nan`` offsets
    for groups without a clean oscillation.
    """
    q_traj = np.asarray(q_traj, dtype=np.float64)
    offsets = np.full(n_groups, np.nan)
    signals = [q_traj[:, g] - np.mean(q_traj[:, g]) for g in range(n_groups)]
    peaks = []
    for x in signals:
        if np.ptp(x) < 2 * amplitude_floor:
            peaks.append(None)
            continue
        p, _ = find_peaks(x, prominence=0.25 * np.ptp(x))
        peaks.append(p if len(p) >= min_peaks else None)
    if peaks[0] is None:
        return offsets, float("nan")
    period = float(np.median(np.diff(peaks[0]))) * dt
    if not period > 0:
        return offsets, float("nan")
    ref_times = peaks[0] * dt
    for g in range(n_groups):
        if peaks[g] is None:
            continue
        shifts = []
        for tp in peaks[g] * dt:
            # nearest group-0 peak at or before this one
            k = np.searchsorted(ref_times, tp, side="right") - 1
            if k < 0:
                continue
            shifts.append(((ref_times[k] - tp) / period) % 1.0)
        if shifts:
            ang = 2 * np.pi * np.asarray(shifts)
            offsets[g] = (np.arctan2(np.mean(np.sin(ang)), np.mean(np.cos(ang))) / (2 * np.pi)) % 1.0
    return offsets, 1.0 / period


def circular_distance(a, b) -> np.ndarray:
    d = np.abs(np.asarray(a) - np.asarray(b)) % 1.0
    return np.minimum(d, 1.0 - d)


def nearest_gait(offsets, candidates=None) -> str | None:
    """Library gait whose group offsets are closest (summed circular distance)."""
    offsets = np.asarray(offsets, dtype=np.float64)
    if np.any(np.isnan(offsets)):
        return None
    candidates = candidates or list(GAIT_PATTERNS)
    dist = {name: float(np.sum(circular_distance(offsets, GAIT_PATTERNS[name]))) for name in candidates}
    return min(dist, key=dist.get)
