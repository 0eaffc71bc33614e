"""Checkpoint files.

Binary layout (all little-endian)::

    magic        4 bytes   b"APXC"
    version      uint32
    config hash  32 bytes  sha256 of the canonical training config
    clock        uint64    TrainingClock.t
    n_arrays     uint32
    arrays       float64 values, concatenated in sidecar order

The JSON sidecar ``<path>.json`` carries the format version, the full run
config, the config hash and the name and shape of every array.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import RunConfig, config_from_dict
from .policy import MLP, CriticPair, GaussianPolicy
from .priors import TrainingClock

MAGIC = b"APXC"
VERSION = 1
_HEADER = struct.Struct("<4sI32sQI")


class IncompatibleCheckpointError(ValueError):
    pass


def _named_arrays(policy: GaussianPolicy, critics: CriticPair) -> list[tuple[str, np.ndarray]]:
    out = []
    net = policy.mean_net
    out.append(("actor.input_scale", net.input_scale))
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out += [(f"actor.w{i}", w), (f"actor.b{i}", b)]
    out.append(("actor.log_std", policy.log_std))
    for s, cnet in critics.nets.items():
        out.append((f"critic.{s}.input_scale", cnet.input_scale))
        for i, (w, b) in enumerate(zip(cnet.weights, cnet.biases)):
            out += [(f"critic.{s}.w{i}", w), (f"critic.{s}.b{i}", b)]
    return out


def save_checkpoint(path, policy: GaussianPolicy, critics: CriticPair, clock: TrainingClock,
                    config: RunConfig) -> None:
    path = Path(path)
    arrays = _named_arrays(policy, critics)
    digest = bytes.fromhex(config.config_hash())
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, digest, int(clock.t), len(arrays)))
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    sidecar = {
        "version": VERSION,
        "config_hash": config.config_hash(),
        "clock": int(clock.t),
        "value_scale": critics.value_scale,
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
        "config": config.to_dict(),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path, expected_config: RunConfig | None = None):
    """Return ``(policy, critics, clock, config)``.

    Raises :class:`IncompatibleCheckpointError` on a bad magic, an unknown
    version, a sidecar/binary mismatch, or a config whose hash differs from
    ``expected_config``.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise IncompatibleCheckpointError(f"{path}: truncated header")
    magic, version, digest, clock_t, n_arrays = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise IncompatibleCheckpointError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise IncompatibleCheckpointError(f"{path}: version {version}, expected {VERSION}")
    meta = json.loads(Path(str(path) + ".json").read_text())
    if meta.get("version") != VERSION or meta.get("config_hash") != digest.hex():
        raise IncompatibleCheckpointError(f"{path}: sidecar does not match binary header")
    config = config_from_dict(meta["config"])
    if config.config_hash() != digest.hex():
        raise IncompatibleCheckpointError(f"{path}: embedded config does not hash to the stored value")
    if expected_config is not None and expected_config.config_hash() != digest.hex():
        detail = ""
        if expected_config.n_joints != config.n_joints:
            detail = f" (n_joints {expected_config.n_joints} vs checkpoint {config.n_joints})"
        raise IncompatibleCheckpointError(f"{path}: config hash mismatch{detail}")
    specs = meta["arrays"]
    if len(specs) != n_arrays:
        raise IncompatibleCheckpointError(f"{path}: array count mismatch")
    arrays = {}
    offset = _HEADER.size
    for spec in specs:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(blob):
            raise IncompatibleCheckpointError(f"{path}: truncated array data")
        arrays[spec["name"]] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(spec["shape"]).astype(np.float64)
        offset = end
    if offset != len(blob):
        raise IncompatibleCheckpointError(f"{path}: trailing bytes")

    def mlp(prefix):
        ws, bs, i = [], [], 0
        while f"{prefix}.w{i}" in arrays:
            ws.append(arrays[f"{prefix}.w{i}"])
            bs.append(arrays[f"{prefix}.b{i}"])
            i += 1
        return MLP(ws, bs, arrays[f"{prefix}.input_scale"])

    policy = GaussianPolicy(mlp("actor"), arrays["actor.log_std"])
    streams = sorted({name.split(".")[1] for name in arrays if name.startswith("critic.")})
    critics = CriticPair({s: mlp(f"critic.{s}") for s in streams}, meta["value_scale"])
    if policy.act_dim != config.n_joints:
        raise IncompatibleCheckpointError(f"{path}: actor width {policy.act_dim} != n_joints {config.n_joints}")
    return policy, critics, TrainingClock(clock_t), config
