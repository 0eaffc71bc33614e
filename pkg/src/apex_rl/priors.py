"""Decaying action priors: ``u = a + lambda**(t/k) * kp * (q_ref - q)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DimensionError, PDGains

CLOCK_MODES = ("per_env_steps",)


@dataclass(frozen=True)
class PriorConfig:
    lam: float = 0.99
    k: float = 100.0
    enabled: bool = True
    clock_mode: str = "per_env_steps"

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.k > 1.0:
            raise ValueError(f"k must be > 1, got {self.k}")
        if self.clock_mode not in CLOCK_MODES:
            raise ValueError(f"clock_mode must be one of {CLOCK_MODES}")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "k": self.k, "enabled": self.enabled, "clock_mode": self.clock_mode}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass
class TrainingClock:
    """Cumulative per-environment control steps; never reset by episodes."""

    t: int = 0

    def advance(self, steps: int = 1) -> None:
        if steps < 0:
            raise ValueError("clock cannot run backwards")
        self.t += steps


def prior_torque(gains: PDGains | np.ndarray, q_ref, q) -> np.ndarray:
    """``kp * (q_ref - q)`` with the robot's proportional gains; no damping term.

    ``gains`` may also be a raw ``kp`` array, e.g. per-environment randomized
    gains of shape ``(n_envs, n)``.
    """
    kp = gains.kp if isinstance(gains, PDGains) else np.asarray(gains, dtype=np.float64)
    q_ref = np.asarray(q_ref, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n = kp.shape[-1]
    if q_ref.shape[-1:] != (n,) or q.shape[-1:] != (n,):
        raise DimensionError(f"prior_torque: expected vectors of length {n}")
    return kp * (q_ref - q)


def decay_coeff(clock: TrainingClock | int, cfg: PriorConfig) -> float:
    if not cfg.enabled:
        return 0.0
    t = clock.t if isinstance(clock, TrainingClock) else int(clock)
    return float(cfg.lam ** (t / cfg.k))


def blend(action, beta, c: float) -> np.ndarray:
    action = np.asarray(action, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if action.shape != beta.shape:
        raise DimensionError(f"blend: action shape {action.shape} != prior shape {beta.shape}")
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"decay coefficient must lie in [0, 1], got {c}")
    return action + c * beta
