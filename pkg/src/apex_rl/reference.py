"""Synthetic gait references and the discrete skill selector.

A gait is a set of per-joint sinusoids sharing one frequency. Joints are
grouped into four "legs" by ``index % 4``; the per-group phase offsets define
the footfall pattern.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dynamics import ChainParams, default_chain, forward_kinematics

GAIT_PATTERNS: dict[str, tuple[float, float, float, float]] = {
    "pace": (0.0, 0.5, 0.0, 0.5),
    "pronk": (0.0, 0.0, 0.0, 0.0),
    "trot": (0.0, 0.5, 0.5, 0.0),
    "canter": (0.0, 0.3, 0.7, 0.8),
}
# library order fixes the selector value of each gait: pace 0, pronk 1/4, trot 1/2, canter 3/4
GAIT_ORDER = ("pace", "pronk", "trot", "canter")
GAIT_VELOCITY_CMD = {"pace": 0.05, "pronk": 0.0, "trot": 0.1, "canter": 0.15}


class SelectorRangeError(ValueError):
    pass


class GaitConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GaitSpec:
    name: str
    frequency: float
    amplitudes: np.ndarray
    phase_offsets: np.ndarray
    joint_offsets: np.ndarray
    tip_height_cmd: float = 0.0
    velocity_cmd: float = 0.0
    angular_cmd: float = 0.0

    def __post_init__(self):
        for name in ("amplitudes", "phase_offsets", "joint_offsets"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).copy())
        n = self.amplitudes.shape[-1]
        if self.phase_offsets.shape != (n,) or self.joint_offsets.shape != (n,):
            raise GaitConfigError(f"gait {self.name}: per-joint vectors must all have length {n}")
        if not self.frequency > 0:
            raise GaitConfigError(f"gait {self.name}: frequency must be > 0")
        if np.any(self.phase_offsets < 0) or np.any(self.phase_offsets >= 1):
            raise GaitConfigError(f"gait {self.name}: phase offsets must lie in [0, 1)")

    @property
    def n_joints(self) -> int:
        return self.amplitudes.shape[-1]

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GaitSpec":
        return cls(**d)


@dataclass(frozen=True)
class SkillSelector:
    m: int
    n: int
    value: float


def selector_value(m: int, n: int) -> SkillSelector:
    if n < 1:
        raise SelectorRangeError(f"selector count must be >= 1, got {n}")
    if not 0 <= m < n:
        raise SelectorRangeError(f"selector index {m} outside [0, {n})")
    return SkillSelector(m, n, m / n)


def parse_selector(text: str) -> SkillSelector:
    """Parse ``"M/N"`` into a selector."""
    try:
        m, n = (int(p) for p in text.split("/"))
    except ValueError as exc:
        raise SelectorRangeError(f"bad selector {text!r}, expected M/N") from exc
    return selector_value(m, n)


def reference_angles(gait: GaitSpec, t) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=np.float64)
    arg = 2.0 * np.pi * (gait.frequency * t[..., None] + gait.phase_offsets)
    q_ref = gait.joint_offsets + gait.amplitudes * np.sin(arg)
    qdot_ref = gait.amplitudes * (2.0 * np.pi * gait.frequency) * np.cos(arg)
    return q_ref, qdot_ref


def sample_reference(gait: GaitSpec, t, params: ChainParams):
    """Reference joint angles, their exact time derivative, and the tip position.

    ``t`` may be a scalar or an array; outputs gain a trailing joint axis.
    Returns ``(q_ref, qdot_ref, tip_ref)`` where ``tip_ref[..., 0]`` is x and
    ``tip_ref[..., 1]`` is z.
    """
    q_ref, qdot_ref = reference_angles(gait, t)
    x, z = forward_kinematics(q_ref, params)
    return q_ref, qdot_ref, np.stack([x, z], axis=-1)


def phase(gait: GaitSpec, t):
    p = np.mod(gait.frequency * np.asarray(t, dtype=np.float64), 1.0)
    # t = k/frequency can land a rounding error below an integer
    p = np.where(p > 1.0 - 1e-12, 0.0, p)
    return float(p) if np.ndim(p) == 0 else p


def phase_features(gait: GaitSpec, t) -> np.ndarray:
    """``(sin 2*pi*phase, cos 2*pi*phase)``; continuous across the wrap."""
    p = np.asarray(phase(gait, t))
    return np.stack([np.sin(2 * np.pi * p), np.cos(2 * np.pi * p)], axis=-1)


def _mean_tip_height(frequency, amplitudes, phase_offsets, joint_offsets, params) -> float:
    ts = np.linspace(0.0, 1.0 / frequency, 256, endpoint=False)
    arg = 2.0 * np.pi * (frequency * ts[:, None] + phase_offsets)
    _, z = forward_kinematics(joint_offsets + amplitudes * np.sin(arg), params)
    return float(np.mean(z))


def make_gait(
    name: str,
    n_joints: int,
    params: ChainParams | None = None,
    frequency: float = 1.5,
    amplitude: float = 0.1,
) -> GaitSpec:
    if name not in GAIT_PATTERNS:
        raise GaitConfigError(f"unknown gait {name!r}; known: {', '.join(GAIT_ORDER)}")
    if n_joints < 4:
        raise GaitConfigError(f"gait library needs n_joints >= 4, got {n_joints}")
    params = params or default_chain(n_joints)
    idx = np.arange(n_joints)
    pattern = np.asarray(GAIT_PATTERNS[name])
    phase_offsets = pattern[idx % 4]
    # alternate sign per block of four so cumulative angles stay bounded
    amplitudes = amplitude * np.where((idx // 4) % 2 == 0, 1.0, -1.0)
    joint_offsets = np.zeros(n_joints)
    return GaitSpec(
        name=name,
        frequency=frequency,
        amplitudes=amplitudes,
        phase_offsets=phase_offsets,
        joint_offsets=joint_offsets,
        tip_height_cmd=_mean_tip_height(frequency, amplitudes, phase_offsets, joint_offsets, params),
        velocity_cmd=GAIT_VELOCITY_CMD[name],
        angular_cmd=0.0,
    )


def gait_library(n_joints: int, params: ChainParams | None = None) -> list[GaitSpec]:
    """The four library gaits in selector order: pace, pronk, trot, canter."""
    return [make_gait(name, n_joints, params) for name in GAIT_ORDER]


@dataclass(frozen=True)
class MotionClip:
    gait: GaitSpec
    duration: float
    dt: float
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    tip: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path) -> None:
        n = self.gait.n_joints
        header = (
            ["t"] + [f"q_ref_{j + 1}" for j in range(n)] + [f"qdot_ref_{j + 1}" for j in range(n)]
            + ["tip_x", "tip_z"]
        )
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self.t)):
                w.writerow([repr(float(v)) for v in (self.t[i], *self.q[i], *self.qdot[i], *self.tip[i])])


def build_clip(gait: GaitSpec, params: ChainParams, duration: float, dt: float) -> MotionClip:
    if duration < 0 or dt <= 0:
        raise ValueError("duration must be >= 0 and dt > 0")
    count = int(Fraction(duration).limit_denominator(10**9) / Fraction(dt).limit_denominator(10**9)) + 1
    t = np.arange(count) * dt
    q, qdot, tip = sample_reference(gait, t, params)
    return MotionClip(gait, duration, dt, t, q, qdot, tip)


def max_reference_speed(gait: GaitSpec) -> float:
    return 2.0 * math.pi * gait.frequency * float(np.max(np.abs(gait.amplitudes)))
