"""JSON run configuration.

Every section is a flat mapping; unknown keys are rejected with the dotted
path of the offending field so the CLI can point at it.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .dynamics import ChainParams, DRConfig, PDGains, default_chain
from .policy import VARIANTS, VariantConfig, get_variant
from .priors import PriorConfig
from .reference import GAIT_ORDER, GaitSpec, make_gait
from .rewards import RewardConfig


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` is a dotted path when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    lr: float = 1e-3
    entropy_coef: float = 0.0
    horizon: int = 42
    n_envs: int = 32
    iterations: int = 500
    max_grad_norm: float = 1.0
    critic_mode: str = "multi"
    style_adv_weight: float = 1.0
    task_adv_weight: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1 or not 0 < self.gae_lambda <= 1:
            raise ConfigError("gamma and gae_lambda must lie in (0, 1]", "ppo")
        if not 0 < self.clip_eps <= 0.5:
            raise ConfigError("clip_eps must lie in (0, 0.5]", "ppo.clip_eps")
        for name in ("epochs", "minibatches", "horizon", "n_envs"):
            if getattr(self, name) < 1:
                raise ConfigError("must be >= 1", f"ppo.{name}")
        if self.iterations < 0:
            raise ConfigError("must be >= 0", "ppo.iterations")
        if (self.horizon * self.n_envs) % self.minibatches:
            raise ConfigError("horizon * n_envs must be divisible by minibatches", "ppo.minibatches")
        if self.critic_mode not in ("multi", "single"):
            raise ConfigError("must be 'multi' or 'single'", "ppo.critic_mode")
        if self.lr <= 0:
            raise ConfigError("must be > 0", "ppo.lr")


@dataclass(frozen=True)
class NetworkConfig:
    hidden: tuple[int, ...] = (128, 128)
    init_log_std: float = 0.0
    actor_output_scale: float = 0.01
    action_scale: float = 1.0  # N*m per normalized action unit
    value_output_scale: float = 50.0
    qdot_obs_scale: float = 0.2
    action_obs_scale: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("hidden sizes must be positive", "network.hidden")
        if not self.action_scale > 0:
            raise ConfigError("must be > 0", "network.action_scale")


@dataclass(frozen=True)
class EnvConfig:
    episode_length: int = 400
    divergence_limit: float = 4 * math.pi
    eval_steps: int = 150
    eval_every: int = 1
    kp: float = 20.0
    kd: float = 0.5
    gait_frequency: float = 1.5
    gait_amplitude: float = 0.1

    def __post_init__(self):
        if self.episode_length < 1 or self.eval_steps < 1 or self.eval_every < 1:
            raise ConfigError("episode_length, eval_steps and eval_every must be >= 1", "env")


@dataclass(frozen=True)
class RunConfig:
    variant: str = "APEX"
    chain: ChainParams = field(default_factory=default_chain)
    gaits: tuple[str, ...] = ("trot",)
    gait_overrides: dict = field(default_factory=dict)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    dr: DRConfig = field(default_factory=DRConfig)
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs"

    def __post_init__(self):
        get_variant(self.variant)
        object.__setattr__(self, "gaits", tuple(self.gaits))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.gaits:
            raise ConfigError("at least one gait is required", "gaits")
        for g in self.gaits:
            if g not in GAIT_ORDER:
                raise ConfigError(f"unknown gait {g!r}", "gaits")
        if len(set(self.gaits)) != len(self.gaits):
            raise ConfigError("gaits must be distinct", "gaits")
        if not self.seeds:
            raise ConfigError("at least one seed is required", "seeds")

    @property
    def variant_config(self) -> VariantConfig:
        return get_variant(self.variant)

    @property
    def n_joints(self) -> int:
        return self.chain.n_joints

    def gains(self) -> PDGains:
        return PDGains.uniform(self.n_joints, self.env.kp, self.env.kd)

    def gait_specs(self) -> list[GaitSpec]:
        """Configured gaits in selector order (index m gives selector m/len)."""
        out = []
        for name in self.gaits:
            spec = make_gait(name, self.n_joints, self.chain, self.env.gait_frequency, self.env.gait_amplitude)
            override = self.gait_overrides.get(name)
            if override:
                spec = GaitSpec.from_dict({**spec.to_dict(), **override})
            out.append(spec)
        return out

    def prior_active(self) -> bool:
        return self.variant_config.prior_enabled and self.prior.enabled

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "chain": self.chain.to_dict(),
            "gaits": list(self.gaits),
            "gait_overrides": copy.deepcopy(self.gait_overrides),
            "rewards": self.rewards.to_dict(),
            "prior": self.prior.to_dict(),
            "ppo": dataclasses.asdict(self.ppo),
            "network": {**dataclasses.asdict(self.network), "hidden": list(self.network.hidden)},
            "env": dataclasses.asdict(self.env),
            "dr": self.dr.to_dict(),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
        }

    def training_dict(self) -> dict:
        """Config content that determines the trained parameters' layout and meaning."""
        d = self.to_dict()
        del d["seeds"], d["output_dir"]
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.training_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def with_ppo(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, ppo=dataclasses.replace(self.ppo, **changes))


_SECTIONS: dict[str, Any] = {
    "chain": ChainParams,
    "rewards": RewardConfig,
    "prior": PriorConfig,
    "ppo": PPOConfig,
    "network": NetworkConfig,
    "env": EnvConfig,
    "dr": DRConfig,
}
_TOP_KEYS = {"variant", "variant_flags", "gaits", "gait_overrides", "seeds", "output_dir", *_SECTIONS}
_GAIT_OVERRIDE_KEYS = {f.name for f in dataclasses.fields(GaitSpec)} - {"name"}


def _allowed_keys(section: str) -> set[str]:
    if section == "prior":
        return {"lambda", "k", "enabled", "clock_mode"}
    return {f.name for f in dataclasses.fields(_SECTIONS[section])}


def _build_section(section: str, raw: Any, n_joints: int | None):
    if not isinstance(raw, dict):
        raise ConfigError("must be a JSON object", section)
    unknown = sorted(set(raw) - _allowed_keys(section))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)}", f"{section}.{unknown[0]}")
    cls = _SECTIONS[section]
    try:
        if section == "chain":
            base = default_chain(int(raw.get("n_joints", n_joints or 8))).to_dict()
            return ChainParams.from_dict({**base, **raw})
        if hasattr(cls, "from_dict"):
            return cls.from_dict(raw)
        return cls(**raw)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.field or section) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), section) from None


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)}", unknown[0])
    kwargs: dict[str, Any] = {}
    for section in _SECTIONS:
        if section in raw:
            kwargs[section] = _build_section(section, raw[section], None)
    for key in ("variant", "output_dir"):
        if key in raw:
            if not isinstance(raw[key], str):
                raise ConfigError("must be a string", key)
            kwargs[key] = raw[key]
    if "variant" in kwargs and kwargs["variant"] not in VARIANTS:
        raise ConfigError(f"unknown variant {kwargs['variant']!r}", "variant")
    if "gaits" in raw:
        kwargs["gaits"] = tuple(raw["gaits"])
    if "seeds" in raw:
        kwargs["seeds"] = tuple(raw["seeds"])
    if "gait_overrides" in raw:
        go = raw["gait_overrides"]
        if not isinstance(go, dict):
            raise ConfigError("must be a JSON object", "gait_overrides")
        for name, fields in go.items():
            if name not in GAIT_ORDER:
                raise ConfigError(f"unknown gait {name!r}", f"gait_overrides.{name}")
            bad = sorted(set(fields) - _GAIT_OVERRIDE_KEYS)
            if bad:
                raise ConfigError(f"unknown key(s) {', '.join(bad)}", f"gait_overrides.{name}.{bad[0]}")
        kwargs["gait_overrides"] = copy.deepcopy(go)
    try:
        cfg = RunConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "variant_flags" in raw:
        flags = raw["variant_flags"]
        expected = dataclasses.asdict(cfg.variant_config)
        expected.pop("name")
        if not isinstance(flags, dict) or set(flags) - set(expected):
            raise ConfigError(f"expected keys {sorted(expected)}", "variant_flags")
        for k, v in flags.items():
            if v != expected[k]:
                raise ConfigError(f"{cfg.variant} requires {k}={expected[k]}", f"variant_flags.{k}")
    try:
        cfg.gait_specs()
    except ValueError as exc:
        raise ConfigError(str(exc), "gait_overrides") from None
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    try:
        return config_from_dict(raw)
    except ConfigError as exc:
        if exc.field and exc.line is None:
            exc.line = _locate(text, exc.field)
            if exc.line is not None:
                raise ConfigError(str(exc).split(": ", 1)[-1], exc.field, exc.line) from None
        raise


def _locate(text: str, dotted: str) -> int | None:
    key = f'"{dotted.split(".")[-1]}"'
    for i, line in enumerate(text.splitlines(), 1):
        if key in line:
            return i
    return None


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
