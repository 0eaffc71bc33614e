"""Planar torque-controlled chain used as the desk-scale robot.

Each joint follows decoupled second-order dynamics

    I_j * qdd_j = tau_j - b_j * qd_j - m_j * g * l_j * sin(theta_j)

where ``theta_j`` is the absolute (cumulative) angle of link ``j``. Angle 0
points straight down (-z), positive is counterclockwise. Integration is
semi-implicit Euler: velocities are updated first, then positions, over
``substeps`` equal slices of the control step.

All functions accept arrays with arbitrary leading batch axes; the joint axis
is always last.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """A vector does not have the chain's joint count."""


class SimulationDivergedError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, joint: int, message: str | None = None):
        self.joint = joint
        super().__init__(message or f"simulation diverged at joint {joint}")


def _vec(x, n: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise DimensionError(f"{name}: expected a vector of length {n}, got a scalar")
    if arr.shape[-1] != n:
        raise DimensionError(f"{name}: expected length {n}, got {arr.shape[-1]}")
    return arr


def _full(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    return _vec(arr, n, name).copy()


@dataclass(frozen=True)
class ChainParams:
    n_joints: int
    link_lengths: np.ndarray
    link_masses: np.ndarray
    joint_damping: np.ndarray
    joint_inertia: np.ndarray
    gravity: float = 9.81
    torque_limit: float = 10.0
    dt: float = 0.02
    substeps: int = 4

    def __post_init__(self):
        n = int(self.n_joints)
        if n < 1:
            raise ValueError("n_joints must be >= 1")
        object.__setattr__(self, "n_joints", n)
        for name in ("link_lengths", "link_masses", "joint_damping", "joint_inertia"):
            object.__setattr__(self, name, _full(getattr(self, name), n, name))
        if np.any(self.link_lengths <= 0) or np.any(self.link_masses <= 0):
            raise ValueError("link lengths and masses must be > 0")
        if np.any(self.joint_inertia <= 0):
            raise ValueError("joint inertias must be > 0")
        if np.any(self.joint_damping < 0):
            raise ValueError("joint damping must be >= 0")
        if self.dt <= 0 or self.torque_limit <= 0:
            raise ValueError("dt and torque_limit must be > 0")
        if int(self.substeps) < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def sim_dt(self) -> float:
        return self.dt / self.substeps

    @property
    def reach(self) -> float:
        return float(np.sum(self.link_lengths))

    def to_dict(self) -> dict:
        return {
            "n_joints": self.n_joints,
            "link_lengths": self.link_lengths.tolist(),
            "link_masses": self.link_masses.tolist(),
            "joint_damping": self.joint_damping.tolist(),
            "joint_inertia": self.joint_inertia.tolist(),
            "gravity": self.gravity,
            "torque_limit": self.torque_limit,
            "dt": self.dt,
            "substeps": self.substeps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChainParams":
        return cls(**d)


def default_chain(n_joints: int = 8) -> ChainParams:
    return ChainParams(
        n_joints=n_joints,
        link_lengths=0.1,
        link_masses=0.5,
        joint_damping=0.8,
        joint_inertia=0.02,
    )


@dataclass(frozen=True)
class ChainState:
    q: np.ndarray
    qdot: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=np.float64))
        if self.q.shape != self.qdot.shape:
            raise DimensionError("q and qdot must have the same shape")

    @classmethod
    def rest(cls, n_joints: int) -> "ChainState":
        return cls(np.zeros(n_joints), np.zeros(n_joints), 0)


@dataclass(frozen=True)
class PDGains:
    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        kp = np.atleast_1d(np.asarray(self.kp, dtype=np.float64)).copy()
        kd = np.asarray(self.kd, dtype=np.float64)
        kd = np.full(kp.shape, float(kd)) if kd.ndim == 0 else kd.copy()
        if kp.shape != kd.shape:
            raise DimensionError("kp and kd must have the same length")
        if np.any(kp <= 0) or np.any(kd < 0):
            raise ValueError("kp must be > 0 and kd >= 0")
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)

    @classmethod
    def uniform(cls, n_joints: int, kp: float = 20.0, kd: float = 0.5) -> "PDGains":
        return cls(np.full(n_joints, kp), np.full(n_joints, kd))

    def to_dict(self) -> dict:
        return {"kp": self.kp.tolist(), "kd": self.kd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PDGains":
        return cls(**d)


def _interval(r, name: str, positive: bool = False) -> tuple[float, float]:
    lo, hi = (float(v) for v in r)
    if not lo <= hi:
        raise ValueError(f"{name}: empty interval [{lo}, {hi}]")
    if positive and lo <= 0:
        raise ValueError(f"{name}: lower bound must be > 0")
    return lo, hi


@dataclass(frozen=True)
class DRConfig:
    """Domain-randomization ranges for the chain.

    ``damping_scale_range`` stands in for ground friction: a fixed-base chain
    has no ground contact, so the same ratio interval scales joint damping.
    """

    damping_scale_range: tuple[float, float] = (0.3, 1.25)
    mass_scale_range: tuple[float, float] = (0.9, 1.1)
    gain_scale_range: tuple[float, float] = (0.9, 1.1)
    push_interval_range: tuple[float, float] = (4.0, 5.0)
    push_qdot_max: float = 0.4

    def __post_init__(self):
        for name in ("damping_scale_range", "mass_scale_range", "gain_scale_range"):
            object.__setattr__(self, name, _interval(getattr(self, name), name, positive=True))
        object.__setattr__(
            self, "push_interval_range",
            _interval(self.push_interval_range, "push_interval_range", positive=True),
        )
        if self.push_qdot_max < 0:
            raise ValueError("push_qdot_max must be >= 0")

    @classmethod
    def disabled(cls) -> "DRConfig":
        return cls((1.0, 1.0), (1.0, 1.0), (1.0, 1.0), (4.0, 5.0), 0.0)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DRConfig":
        return cls(**d)


def pd_torque(gains: PDGains, q_des, q, qdot) -> np.ndarray:
    """``kp*(q_des - q) - kd*qdot``, elementwise and unclamped."""
    n = gains.kp.shape[-1]
    q_des = _vec(q_des, n, "q_des")
    q = _vec(q, n, "q")
    qdot = _vec(qdot, n, "qdot")
    return gains.kp * (q_des - q) - gains.kd * qdot


def clamp_torque(torque, params: ChainParams) -> np.ndarray:
    return np.clip(torque, -params.torque_limit, params.torque_limit)


def absolute_angles(q) -> np.ndarray:
    return np.cumsum(q, axis=-1)


def integrate(q, qdot, torque, params: ChainParams) -> tuple[np.ndarray, np.ndarray]:
    """Advance one control step with an already-clamped torque. No checks."""
    return integrate_arrays(
        q, qdot, torque, params.link_lengths, params.link_masses, params.joint_damping,
        params.joint_inertia, params.gravity, params.sim_dt, params.substeps,
    )


def integrate_arrays(q, qdot, torque, lengths, masses, damping, inertia, gravity, h, substeps):
    mgl = masses * gravity * lengths
    inv_inertia = 1.0 / inertia
    for _ in range(substeps):
        theta = np.cumsum(q, axis=-1)
        qddot = (torque - damping * qdot - mgl * np.sin(theta)) * inv_inertia
        qdot = qdot + h * qddot
        q = q + h * qdot
    return q, qdot


def step(state: ChainState, torque, params: ChainParams) -> ChainState:
    n = params.n_joints
    torque = _vec(torque, n, "torque")
    _vec(state.q, n, "q")
    tau = clamp_torque(torque, params)
    assert np.all(np.abs(tau) <= params.torque_limit)
    q, qdot = integrate(state.q, state.qdot, tau, params)
    bad = ~(np.isfinite(q) & np.isfinite(qdot))
    if bad.any():
        joint = int(np.argwhere(bad)[0][-1])
        raise SimulationDivergedError(joint)
    return ChainState(q, qdot, state.step_index + 1)


def forward_kinematics(q, params: ChainParams) -> tuple[np.ndarray, np.ndarray]:
    """Tip position ``(x, z)`` of the chain; scalars for a single configuration."""
    q = _vec(q, params.n_joints, "q")
    theta = absolute_angles(q)
    x = np.sum(params.link_lengths * np.sin(theta), axis=-1)
    z = -np.sum(params.link_lengths * np.cos(theta), axis=-1)
    return x, z


def tip_velocity(q, qdot, params: ChainParams) -> tuple[np.ndarray, np.ndarray]:
    q = _vec(q, params.n_joints, "q")
    theta = absolute_angles(q)
    thetadot = absolute_angles(_vec(qdot, params.n_joints, "qdot"))
    vx = np.sum(params.link_lengths * np.cos(theta) * thetadot, axis=-1)
    vz = np.sum(params.link_lengths * np.sin(theta) * thetadot, axis=-1)
    return vx, vz


def tip_angle(q) -> np.ndarray:
    """Absolute angle of the last link."""
    return np.sum(q, axis=-1)


def mechanical_energy(state: ChainState, params: ChainParams) -> float:
    """Kinetic plus gravitational energy of the surrogate.

    Only a conserved quantity for ``n_joints == 1``; with more joints the
    decoupled gravity torques are not the gradient of a potential.
    """
    theta = absolute_angles(state.q)
    kinetic = 0.5 * np.sum(params.joint_inertia * state.qdot**2, axis=-1)
    potential = np.sum(params.link_masses * params.gravity * params.link_lengths * (1.0 - np.cos(theta)), axis=-1)
    return kinetic + potential


def randomize(
    params: ChainParams, gains: PDGains, dr: DRConfig, rng: np.random.Generator
) -> tuple[ChainParams, PDGains]:
    n = params.n_joints
    damping = params.joint_damping * rng.uniform(*dr.damping_scale_range, size=n)
    masses = params.link_masses * rng.uniform(*dr.mass_scale_range, size=n)
    gain_scale = rng.uniform(*dr.gain_scale_range, size=n)
    new_params = dataclasses.replace(params, joint_damping=damping, link_masses=masses)
    new_gains = PDGains(gains.kp * gain_scale, gains.kd * gain_scale)
    return new_params, new_gains


def sample_push_threshold(dr: DRConfig, rng: np.random.Generator) -> float:
    return float(rng.uniform(*dr.push_interval_range))


def apply_push(
    state: ChainState,
    dr: DRConfig,
    rng: np.random.Generator,
    time_since_push: float,
    threshold: float,
) -> tuple[ChainState, bool]:
    """Kick joint velocities once ``time_since_push`` exceeds ``threshold``.

    ``threshold`` is drawn once per episode with :func:`sample_push_threshold`.
    """
    if time_since_push < 0:
        raise ValueError("time_since_push must be >= 0")
    if time_since_push <= threshold:
        return state, False
    kick = rng.uniform(-dr.push_qdot_max, dr.push_qdot_max, size=state.qdot.shape)
    return ChainState(state.q, state.qdot + kick, state.step_index), True
