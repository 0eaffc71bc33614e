"""Batch of independent chain environments advanced in lockstep."""

from __future__ import annotations

import numpy as np

from ..config import RunConfig
from ..dynamics import (
    ChainState, DRConfig, absolute_angles, apply_push, clamp_torque, integrate_arrays,
    randomize, sample_push_threshold,
)
from ..policy import actor_obs_from_arrays
from ..reference import GaitSpec, MotionClip, build_clip, reference_angles
from ..rewards import style_terms, task_terms


def reference_state_init(clip: MotionClip, rng: np.random.Generator) -> tuple[ChainState, float]:
    """Start state sampled uniformly in time along ``clip``; returns ``(state, t0)``."""
    if len(clip) == 0:
        raise ValueError("empty clip")
    t0 = float(rng.uniform(0.0, clip.duration)) if clip.duration > 0 else 0.0
    q, qdot = reference_angles(clip.gait, t0)
    return ChainState(q, qdot, 0), t0


class GaitTable:
    """Per-gait constants stacked along a leading gait axis."""

    def __init__(self, gaits: list[GaitSpec]):
        self.gaits = gaits
        self.freq = np.array([g.frequency for g in gaits])
        self.amp = np.stack([g.amplitudes for g in gaits])
        self.phase_off = np.stack([g.phase_offsets for g in gaits])
        self.joint_off = np.stack([g.joint_offsets for g in gaits])
        self.vel_cmd = np.array([g.velocity_cmd for g in gaits])
        self.ang_cmd = np.array([g.angular_cmd for g in gaits])
        self.height_cmd = np.array([g.tip_height_cmd for g in gaits])
        self.selector = np.arange(len(gaits)) / len(gaits)

    def reference(self, idx, t):
        """Reference angles and rates for gait ``idx[i]`` at time ``t[i]``."""
        f = self.freq[idx][:, None]
        arg = 2.0 * np.pi * (f * t[:, None] + self.phase_off[idx])
        amp = self.amp[idx]
        return self.joint_off[idx] + amp * np.sin(arg), amp * (2.0 * np.pi * f) * np.cos(arg)

    def phase_feats(self, idx, t):
        p = np.mod(self.freq[idx] * t, 1.0)
        return np.stack([np.sin(2 * np.pi * p), np.cos(2 * np.pi * p)], axis=-1)


def tip_position(q, lengths):
    theta = absolute_angles(q)
    return np.stack([np.sum(lengths * np.sin(theta), -1), -np.sum(lengths * np.cos(theta), -1)], axis=-1)


def tip_kinematics(q, qdot, lengths):
    """Tip position ``(B, 2)`` and velocity ``(B, 2)`` for batched joint arrays."""
    theta = absolute_angles(q)
    s, c = np.sin(theta), np.cos(theta)
    thetadot = absolute_angles(qdot)
    pos = np.stack([np.sum(lengths * s, -1), -np.sum(lengths * c, -1)], axis=-1)
    vel = np.stack([np.sum(lengths * c * thetadot, -1), np.sum(lengths * s * thetadot, -1)], axis=-1)
    return pos, vel


class ChainEnvs:
    """``n_envs`` chains with per-env randomized physics, pushes and resets.

    Environment ``i`` tracks gait ``i % len(gaits)`` for the whole run.
    """

    def __init__(self, cfg: RunConfig, n_envs: int, rng_seeds, randomized: bool = True):
        self.cfg = cfg
        self.n = cfg.n_joints
        self.n_envs = n_envs
        self.variant = cfg.variant_config
        self.base = cfg.chain
        self.base_gains = cfg.gains()
        self.dr = cfg.dr if randomized else DRConfig.disabled()
        self.randomized = randomized
        self.table = GaitTable(cfg.gait_specs())
        # one gait period is enough: references are periodic in episode time
        self.clips = [build_clip(g, self.base, g.period, self.base.dt) for g in self.table.gaits]
        self.gait_idx = np.arange(n_envs) % len(self.table.gaits)
        self.rngs = [np.random.default_rng(s) for s in rng_seeds]
        self.dt = self.base.dt
        self.limit = cfg.env.divergence_limit
        self.episode_length = cfg.env.episode_length

        shape = (n_envs, self.n)
        self.q = np.zeros(shape)
        self.qdot = np.zeros(shape)
        self.prev_action = np.zeros(shape)
        self.ep_steps = np.zeros(n_envs, dtype=np.int64)
        self.steps_left = np.zeros(n_envs, dtype=np.int64)
        self.t0 = np.zeros(n_envs)
        self.damping = np.tile(self.base.joint_damping, (n_envs, 1))
        self.masses = np.tile(self.base.link_masses, (n_envs, 1))
        self.kp = np.tile(self.base_gains.kp, (n_envs, 1))
        self.push_elapsed = np.zeros(n_envs)
        self.push_threshold = np.full(n_envs, np.inf)
        for i in range(n_envs):
            self.reset_env(i)
        # stagger the first timeouts so resets do not all land on the same step
        self.steps_left = self.episode_length - (np.arange(n_envs) * self.episode_length) // n_envs
        self.last_timeout = np.zeros(n_envs, dtype=bool)
        self.terminal_critic_obs = None

    # --- resets -----------------------------------------------------------------

    def reset_env(self, i: int) -> None:
        rng = self.rngs[i]
        if self.randomized:
            params, gains = randomize(self.base, self.base_gains, self.dr, rng)
            self.damping[i] = params.joint_damping
            self.masses[i] = params.link_masses
            self.kp[i] = gains.kp
            self.push_threshold[i] = sample_push_threshold(self.dr, rng) if self.dr.push_qdot_max > 0 else np.inf
        self.push_elapsed[i] = 0.0
        if self.variant.rsi_enabled:
            state, t0 = reference_state_init(self.clips[self.gait_idx[i]], rng)
            q, qdot = state.q, state.qdot
        else:
            t0, q, qdot = 0.0, np.zeros(self.n), np.zeros(self.n)
        self.q[i], self.qdot[i], self.t0[i] = q, qdot, t0
        self.prev_action[i] = 0.0
        self.ep_steps[i] = 0
        self.steps_left[i] = self.episode_length

    # --- observation pieces -------------------------------------------------------

    @property
    def episode_time(self) -> np.ndarray:
        return self.t0 + self.ep_steps * self.dt

    def reference(self, t=None):
        return self.table.reference(self.gait_idx, self.episode_time if t is None else t)

    def observations(self):
        """Actor and critic observations plus the current reference angles."""
        return self._observations(self.episode_time)

    def _observations(self, t):
        q_ref, qdot_ref = self.reference(t)
        phase = self.table.phase_feats(self.gait_idx, t) if self.variant.phase_in_actor else None
        actor = actor_obs_from_arrays(
            self.q, self.qdot, self.prev_action, self.table.vel_cmd[self.gait_idx],
            self.table.selector[self.gait_idx], self.variant, phase, q_ref,
        )
        _, tip_vel = tip_kinematics(self.q, self.qdot, self.base.link_lengths)
        critic = np.concatenate([actor, tip_vel, q_ref, qdot_ref], axis=-1)
        return actor, critic, q_ref

    # --- stepping -------------------------------------------------------------------

    def step(self, action, executed):
        """Apply the blended torque ``executed``; ``action`` is the policy's own output.

        Returns ``(style, task, done, clamped_torque)``; finished environments
        are reset before returning. Environments that ended on the time limit
        rather than by diverging are flagged in ``last_timeout`` and their
        pre-reset critic observations kept in ``terminal_critic_obs`` so the
        caller can bootstrap through the truncation.
        """
        tau = clamp_torque(executed, self.base)
        b = self.base
        q, qdot = integrate_arrays(
            self.q, self.qdot, tau, b.link_lengths, self.masses, self.damping, b.joint_inertia,
            b.gravity, b.sim_dt, b.substeps,
        )
        self.q, self.qdot = q, qdot
        self.ep_steps += 1
        self.steps_left -= 1

        t = self.episode_time
        q_ref, _ = self.reference(t)
        tip, tip_vel = tip_kinematics(q, qdot, self.base.link_lengths)
        ref_tip = tip_position(q_ref, self.base.link_lengths)
        cfg = self.cfg.rewards
        g = self.gait_idx
        style = style_terms(q, q_ref, tip, ref_tip, cfg)
        task = task_terms(
            tip_vel[:, 0], np.sum(qdot, axis=-1), tip[:, 1], tau, action, self.prev_action,
            self.table.vel_cmd[g], self.table.ang_cmd[g], self.table.height_cmd[g], cfg,
        )
        self.prev_action = np.array(action, dtype=np.float64)

        finite = np.all(np.isfinite(q), -1) & np.all(np.isfinite(qdot), -1)
        diverged = ~finite | np.any(np.abs(np.where(np.isfinite(q), q, 0.0)) > self.limit, axis=-1)
        style = np.where(finite, style, 0.0)
        task = np.where(finite, task, 0.0)
        timeout = ~diverged & (self.steps_left <= 0)
        done = diverged | timeout

        if self.randomized and self.dr.push_qdot_max > 0:
            self.push_elapsed += self.dt
            for i in np.flatnonzero((self.push_elapsed > self.push_threshold) & ~done):
                pushed, _ = apply_push(
                    ChainState(self.q[i], self.qdot[i]), self.dr, self.rngs[i],
                    self.push_elapsed[i], self.push_threshold[i],
                )
                self.qdot[i] = pushed.qdot
                self.push_elapsed[i] = 0.0
        self.last_timeout = timeout
        self.terminal_critic_obs = self._observations(self.episode_time)[1][timeout] if timeout.any() else None
        for i in np.flatnonzero(done):
            self.reset_env(i)
        return style, task, done, tau
