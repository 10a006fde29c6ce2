"""Self-describing policy checkpoint container.

Layout: magic ``VSLC`` + u32 format version + u64 header length + UTF-8 JSON
header + concatenated little-endian float32 arrays. The header carries the
grouping tag, layer shapes, observation scales, a config snapshot, and one
entry per array (name, shape, byte offset), so a file is loadable without
any out-of-band knowledge. Writes are atomic (temp file + rename).
"""

import json
import os
import struct
import tempfile

import numpy as np

from . import networks as nets
from .actuation import action_dim, validate_grouping

MAGIC = b"VSLC"
FORMAT_VERSION = 1


class PolicyBundle:
    """Actor/critic pair plus the fixed input scaling used in training."""

    def __init__(self, grouping, actor, critic, obs_scale, priv_scale, config=None):
        self.grouping = validate_grouping(grouping)
        self.actor = actor
        self.critic = critic
        self.obs_scale = np.asarray(obs_scale, dtype=np.float32)
        self.priv_scale = np.asarray(priv_scale, dtype=np.float32)
        self.config = config or {}

    def act_deterministic(self, obs):
        return np.clip(self.actor.mean_action(np.asarray(obs) * self.obs_scale), -1.0, 1.0)

    def act_sampled(self, obs, rng):
        action, logp = self.actor.sample(np.asarray(obs) * self.obs_scale, rng)
        return action, logp

    def value(self, priv):
        return self.critic.value(np.asarray(priv) * self.priv_scale)


def obs_scale_vector(grouping):
    """Per-channel actor input scaling (conditioning only, not part of the
    observation contract)."""
    adim = action_dim(grouping)
    return np.concatenate(
        [
            [2.0, 2.0, 0.25],  # command
            np.full(3, 2.0),  # linear velocity
            np.full(3, 0.25),  # angular velocity
            np.ones(3),  # projected gravity
            np.full(12, 0.05),  # joint velocities
            np.ones(12),  # joint positions
            np.ones(adim),  # previous action
        ]
    ).astype(np.float32)


def priv_scale_vector(grouping):
    return np.concatenate(
        [
            np.ones(36),  # kp/kd/motor scales
            [1.0],  # friction
            np.full(5, 0.25),  # mass deltas
            np.full(3, 0.01),  # push force
            obs_scale_vector(grouping),
        ]
    ).astype(np.float32)


def _collect_arrays(bundle: PolicyBundle):
    arrays = []
    for k, (W, b) in enumerate(zip(bundle.actor.mlp.W, bundle.actor.mlp.b)):
        arrays.append((f"actor.W{k}", W))
        arrays.append((f"actor.b{k}", b))
    arrays.append(("actor.log_std", bundle.actor.log_std))
    for k, (W, b) in enumerate(zip(bundle.critic.mlp.W, bundle.critic.mlp.b)):
        arrays.append((f"critic.W{k}", W))
        arrays.append((f"critic.b{k}", b))
    arrays.append(("obs_scale", bundle.obs_scale))
    arrays.append(("priv_scale", bundle.priv_scale))
    return arrays


def save_checkpoint(path, bundle: PolicyBundle, extra_config=None):
    arrays = _collect_arrays(bundle)
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays:
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "<f4",
                        "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "grouping": bundle.grouping,
        "actor_sizes": bundle.actor.mlp.sizes,
        "critic_sizes": bundle.critic.mlp.sizes,
        "config": dict(bundle.config, **(extra_config or {})),
        "arrays": entries,
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path} is not a policy checkpoint (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        return json.loads(fh.read(hlen).decode("utf-8"))


def load_checkpoint(path) -> PolicyBundle:
    header = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(4 + 4 + 8 + len(json.dumps(header, sort_keys=True).encode("utf-8")))
        data = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(data, dtype=entry["dtype"], count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
    rng = np.random.default_rng(0)
    actor = nets.GaussianActor(
        header["actor_sizes"][0], header["actor_sizes"][-1], header["actor_sizes"][1:-1], rng
    )
    critic = nets.Critic(header["critic_sizes"][0], header["critic_sizes"][1:-1], rng)
    for k in range(len(actor.mlp.W)):
        actor.mlp.W[k] = arrays[f"actor.W{k}"]
        actor.mlp.b[k] = arrays[f"actor.b{k}"]
    actor.log_std = arrays["actor.log_std"]
    for k in range(len(critic.mlp.W)):
        critic.mlp.W[k] = arrays[f"critic.W{k}"]
        critic.mlp.b[k] = arrays[f"critic.b{k}"]
    return PolicyBundle(
        header["grouping"], actor, critic, arrays["obs_scale"], arrays["priv_scale"],
        config=header.get("config", {}),
    )
