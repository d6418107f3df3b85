"""Offline datasets: column storage, the ORLD binary format and batch sampling.

ORLD layout (all integers little-endian)::

    b"ORLD" | u16 version | u32 manifest length | manifest (UTF-8 JSON)
    | u64 payload length | 32-byte SHA-256 of payload | payload

The payload is one packed record per transition:
obs f64*d, action (u32 | f64*k), reward f64, next_obs f64*d, done u8,
episode_id u32, t u32.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

MAGIC = b"ORLD"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """Bad magic bytes, unsupported version or truncated file."""


class DatasetIntegrityError(ValueError):
    """Checksum failure or manifest counts that disagree with the payload."""


@dataclass
class Manifest:
    env_id: str
    obs_dim: int
    action_space: dict
    n_transitions: int
    n_episodes: int
    generator: dict
    seed: int
    episode_tags: list | None = None

    @property
    def discrete(self) -> bool:
        return self.action_space["type"] == "discrete"

    @property
    def action_dim(self) -> int:
        return 1 if self.discrete else int(self.action_space["dim"])

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        return cls(**d)


def action_space_of(env) -> dict:
    if env.discrete:
        return {"type": "discrete", "n": int(env.n_actions)}
    return {"type": "continuous", "dim": int(env.action_dim),
            "low": float(env.action_low[0]), "high": float(env.action_high[0])}


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.rewards)


@dataclass
class OfflineDataset:
    manifest: Manifest
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    episode_ids: np.ndarray
    ts: np.ndarray
    _episode_bounds: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("obs", "actions", "rewards", "next_obs", "dones", "episode_ids", "ts"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.setflags(write=False)
            setattr(self, name, arr)
        self.validate()

    def __len__(self) -> int:
        return len(self.rewards)

    def validate(self) -> None:
        n, m = len(self.rewards), self.manifest
        if m.n_transitions != n:
            raise DatasetIntegrityError(f"manifest says {m.n_transitions} transitions, found {n}")
        if self.obs.shape != (n, m.obs_dim) or self.next_obs.shape != (n, m.obs_dim):
            raise DatasetIntegrityError("observation arrays do not match manifest obs_dim")
        n_eps = 0 if n == 0 else int(self.episode_ids[-1]) + 1
        if m.n_episodes != n_eps:
            raise DatasetIntegrityError(f"manifest says {m.n_episodes} episodes, found {n_eps}")
        if n == 0:
            return
        bounds = self.episode_bounds()
        if len(bounds) - 1 != n_eps:
            raise DatasetIntegrityError("episode ids are not contiguous")
        starts = bounds[:-1]
        expected_t = np.arange(n) - np.repeat(starts, np.diff(bounds))
        if not np.array_equal(self.ts, expected_t):
            raise DatasetIntegrityError("per-episode step counters must start at 0 and increase by 1")
        done_pos = np.flatnonzero(self.dones)
        if not np.all(np.isin(done_pos, bounds[1:] - 1)):
            raise DatasetIntegrityError("done flag set before the end of a trajectory")

    def episode_bounds(self) -> np.ndarray:
        """Start offsets of every episode plus a final ``len(self)``."""
        if self._episode_bounds is None:
            ids = self.episode_ids
            if len(ids) == 0:
                b = np.zeros(1, dtype=np.int64)
            else:
                if np.any(np.diff(ids) < 0) or np.any(np.diff(ids) > 1) or ids[0] != 0:
                    raise DatasetIntegrityError("episode ids are not contiguous")
                change = np.flatnonzero(np.diff(ids)) + 1
                b = np.concatenate([[0], change, [len(ids)]]).astype(np.int64)
            self._episode_bounds = b
        return self._episode_bounds

    def episode_returns(self) -> np.ndarray:
        b = self.episode_bounds()
        if len(b) == 1:
            return np.zeros(0)
        return np.add.reduceat(self.rewards, b[:-1])

    def episode_lengths(self) -> np.ndarray:
        return np.diff(self.episode_bounds())

    def episodes(self) -> Iterator[slice]:
        b = self.episode_bounds()
        for i in range(len(b) - 1):
            yield slice(int(b[i]), int(b[i + 1]))

    def checksum(self) -> str:
        return hashlib.sha256(_pack_records(self)).hexdigest()

    def equals(self, other: "OfflineDataset") -> bool:
        """Bit-exact equality of manifest and every column."""
        if self.manifest != other.manifest:
            return False
        for name in ("obs", "actions", "rewards", "next_obs", "dones", "episode_ids", "ts"):
            a, b = getattr(self, name), getattr(other, name)
            if a.dtype != b.dtype or a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return True


def _record_dtype(manifest: Manifest) -> np.dtype:
    d = manifest.obs_dim
    action = ("action", "<u4") if manifest.discrete else ("action", "<f8", (manifest.action_dim,))
    return np.dtype([("obs", "<f8", (d,)), action, ("reward", "<f8"), ("next_obs", "<f8", (d,)),
                     ("done", "u1"), ("episode_id", "<u4"), ("t", "<u4")])


def _pack_records(ds: OfflineDataset) -> bytes:
    rec = np.empty(len(ds), dtype=_record_dtype(ds.manifest))
    rec["obs"] = ds.obs
    rec["action"] = ds.actions
    rec["reward"] = ds.rewards
    rec["next_obs"] = ds.next_obs
    rec["done"] = ds.dones
    rec["episode_id"] = ds.episode_ids
    rec["t"] = ds.ts
    return rec.tobytes()


def save(dataset: OfflineDataset, path) -> None:
    payload = _pack_records(dataset)
    manifest = dataset.manifest.to_json().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(manifest)))
        fh.write(manifest)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(hashlib.sha256(payload).digest())
        fh.write(payload)


def load(path) -> OfflineDataset:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DatasetFormatError(f"{path}: not an ORLD file (magic {raw[:4]!r})")
    if len(raw) < 10:
        raise DatasetFormatError(f"{path}: truncated header")
    version, mlen = struct.unpack_from("<HI", raw, 4)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported ORLD version {version}")
    off = 10
    if len(raw) < off + mlen + 40:
        raise DatasetFormatError(f"{path}: truncated manifest")
    try:
        manifest = Manifest.from_dict(json.loads(raw[off:off + mlen].decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"{path}: unreadable manifest: {exc}") from exc
    off += mlen
    (plen,) = struct.unpack_from("<Q", raw, off)
    digest = raw[off + 8:off + 40]
    payload = raw[off + 40:]
    if len(payload) != plen:
        raise DatasetFormatError(f"{path}: payload is {len(payload)} bytes, header says {plen}")
    if hashlib.sha256(payload).digest() != digest:
        raise DatasetIntegrityError(f"{path}: payload checksum mismatch")
    dtype = _record_dtype(manifest)
    if plen % dtype.itemsize:
        raise DatasetFormatError(f"{path}: payload is not a whole number of records")
    n = plen // dtype.itemsize
    if n != manifest.n_transitions:
        raise DatasetIntegrityError(
            f"{path}: manifest counts {manifest.n_transitions} transitions, payload holds {n}")
    rec = np.frombuffer(payload, dtype=dtype)
    actions = rec["action"].astype(np.int64) if manifest.discrete else rec["action"].astype(np.float64)
    return OfflineDataset(
        manifest=manifest,
        obs=rec["obs"].astype(np.float64),
        actions=actions,
        rewards=rec["reward"].astype(np.float64),
        next_obs=rec["next_obs"].astype(np.float64),
        dones=rec["done"].astype(bool),
        episode_ids=rec["episode_id"].astype(np.int64),
        ts=rec["t"].astype(np.int64),
    )


def sample_batch(dataset: OfflineDataset, batch_size: int = 256,
                 rng: np.random.Generator | None = None) -> Batch:
    """Uniform i.i.d. sample with replacement."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot sample from an empty dataset")
    if rng is None:
        rng = np.random.default_rng()
    idx = rng.integers(0, n, size=batch_size)
    return Batch(dataset.obs[idx], dataset.actions[idx], dataset.rewards[idx],
                 dataset.next_obs[idx], dataset.dones[idx])


class ReplayBuffer:
    """FIFO buffer seeded from an offline dataset (used for fine-tuning).

    Storage grows by doubling up to ``capacity``, so a 10^6 capacity does
    not allocate 10^6 rows up front.
    """

    def __init__(self, dataset: OfflineDataset, capacity: int = 1_000_000):
        self.capacity = capacity
        n = len(dataset)
        self.discrete = dataset.manifest.discrete
        self._adim = () if self.discrete else (dataset.manifest.action_dim,)
        self._obs_dim = dataset.manifest.obs_dim
        self.size = 0
        self.pos = 0
        self._alloc(min(capacity, max(1024, 2 * n)))
        keep = slice(max(0, n - capacity), n)
        self.extend(dataset.obs[keep], dataset.actions[keep], dataset.rewards[keep],
                    dataset.next_obs[keep], dataset.dones[keep])

    def _alloc(self, rows: int) -> None:
        old = None if self.size == 0 else (self.obs, self.actions, self.rewards, self.next_obs, self.dones)
        self.obs = np.zeros((rows, self._obs_dim))
        self.next_obs = np.zeros((rows, self._obs_dim))
        self.actions = np.zeros((rows, *self._adim), dtype=np.int64 if self.discrete else np.float64)
        self.rewards = np.zeros(rows)
        self.dones = np.zeros(rows, dtype=bool)
        if old is not None:
            k = self.size
            self.obs[:k], self.actions[:k], self.rewards[:k], self.next_obs[:k], self.dones[:k] = (
                a[:k] for a in old)

    def __len__(self):
        return self.size

    def extend(self, obs, actions, rewards, next_obs, dones) -> None:
        for i in range(len(rewards)):
            self.add(obs[i], actions[i], rewards[i], next_obs[i], dones[i])

    def add(self, obs, action, reward, next_obs, done) -> None:
        if self.size == len(self.rewards) and self.size < self.capacity:
            self._alloc(min(self.capacity, 2 * self.size))
        p = self.pos
        self.obs[p] = obs
        self.actions[p] = action
        self.rewards[p] = reward
        self.next_obs[p] = next_obs
        self.dones[p] = done
        self.pos = (p + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx],
                     self.next_obs[idx], self.dones[idx])
