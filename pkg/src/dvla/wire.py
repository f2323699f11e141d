"""Binary wire format for cross-process/cross-node frames.

All integers little-endian. Frame = 15-byte header + payload:
  magic "DVLA" (4) | format_version u16 = 1 | msg_type u8 | payload_len u64
msg_type: 1=TrajectoryBatch, 2=Metadata, 3=WeightSnapshot, 4=Ack.

decode() treats its input as exactly one frame: payload_len must match the
remaining length, and every length field is bounds-checked so arbitrary bytes
can never raise anything but DecodeError (fuzzed at 10^4 cases).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import ParamSnapshot, snapshot_from_params
from .grpo import GroupBatch

MAGIC = b"DVLA"
FORMAT_VERSION = 1
HEADER_LEN = 15

MSG_TRAJECTORY_BATCH = 1
MSG_METADATA = 2
MSG_WEIGHT_SNAPSHOT = 3
MSG_ACK = 4

_MAX_REASONABLE_COUNT = 1 << 32


class DecodeError(ValueError):
    """Malformed frame; the message names the offending byte offset."""

    def __init__(self, offset: int, reason: str):
        super().__init__(f"{reason} at offset {offset}")
        self.offset = offset
        self.reason = reason


@dataclass(frozen=True)
class TrajectoryBatchMsg:
    policy_version: int
    groups: tuple  # tuple[GroupBatch, ...]


@dataclass(frozen=True)
class MetadataMsg:
    entries: tuple  # tuple[(str, bytes), ...] order-preserving


@dataclass(frozen=True)
class AckMsg:
    epoch_id: int


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def need(self, n: int, what: str):
        if self.pos + n > len(self.buf):
            raise DecodeError(self.pos, f"truncated {what}")

    def u8(self, what: str) -> int:
        self.need(1, what)
        v = self.buf[self.pos]
        self.pos += 1
        return v

    def u16(self, what: str) -> int:
        self.need(2, what)
        v = struct.unpack_from("<H", self.buf, self.pos)[0]
        self.pos += 2
        return v

    def u32(self, what: str) -> int:
        self.need(4, what)
        v = struct.unpack_from("<I", self.buf, self.pos)[0]
        self.pos += 4
        return v

    def u64(self, what: str) -> int:
        self.need(8, what)
        v = struct.unpack_from("<Q", self.buf, self.pos)[0]
        self.pos += 8
        return v

    def f32(self, what: str) -> float:
        self.need(4, what)
        v = struct.unpack_from("<f", self.buf, self.pos)[0]
        self.pos += 4
        return v

    def f32_array(self, count: int, what: str) -> np.ndarray:
        nbytes = count * 4
        self.need(nbytes, what)
        arr = np.frombuffer(self.buf, dtype="<f4", count=count, offset=self.pos)
        self.pos += nbytes
        return arr.copy()

    def raw(self, n: int, what: str) -> bytes:
        self.need(n, what)
        v = self.buf[self.pos:self.pos + n]
        self.pos += n
        return v


def _encode_group(out: bytearray, g: GroupBatch):
    n_chunks = g.obs.shape[1]
    obs_dim = g.obs.shape[2]
    act_dim = g.actions.shape[2] // g.chunk
    out += struct.pack("<QIIIII", g.group_id, g.g, g.horizon, g.chunk,
                       obs_dim, act_dim)
    for i in range(g.g):
        out += struct.pack("<f", float(g.rewards[i]))
        out += struct.pack("<Q", g.behavior_version)
        out += np.ascontiguousarray(g.obs[i], dtype="<f4").tobytes()
        out += np.ascontiguousarray(g.actions[i], dtype="<f4").tobytes()
        out += np.ascontiguousarray(g.behavior_log_prob[i], dtype="<f4").tobytes()
    return n_chunks


def encode(msg) -> bytes:
    """Serialize one message to a complete frame."""
    payload = bytearray()
    if isinstance(msg, TrajectoryBatchMsg):
        msg_type = MSG_TRAJECTORY_BATCH
        payload += struct.pack("<QI", msg.policy_version, len(msg.groups))
        for g in msg.groups:
            _encode_group(payload, g)
    elif isinstance(msg, MetadataMsg):
        msg_type = MSG_METADATA
        payload += struct.pack("<I", len(msg.entries))
        for key, val in msg.entries:
            kb = key.encode("utf-8")
            payload += struct.pack("<H", len(kb)) + kb
            payload += struct.pack("<I", len(val)) + bytes(val)
    elif isinstance(msg, ParamSnapshot):
        msg_type = MSG_WEIGHT_SNAPSHOT
        payload += struct.pack("<QQ", msg.version, msg.params.size)
        payload += np.ascontiguousarray(msg.params, dtype="<f4").tobytes()
    elif isinstance(msg, AckMsg):
        msg_type = MSG_ACK
        payload += struct.pack("<Q", msg.epoch_id)
    else:
        raise TypeError(f"cannot encode {type(msg)!r}")
    header = MAGIC + struct.pack("<HBQ", FORMAT_VERSION, msg_type, len(payload))
    return bytes(header + payload)


def frame_size(msg) -> int:
    return len(encode(msg))


def weight_frame_size(param_count: int) -> int:
    """Header + fixed snapshot fields + 4 bytes per parameter."""
    return HEADER_LEN + 16 + 4 * param_count


def _decode_trajectory_batch(r: _Reader) -> TrajectoryBatchMsg:
    policy_version = r.u64("policy_version")
    group_count = r.u32("group_count")
    groups = []
    for _ in range(group_count):
        at = r.pos
        group_id = r.u64("group_id")
        traj_count = r.u32("traj_count")
        horizon = r.u32("horizon")
        chunk = r.u32("chunk")
        obs_dim = r.u32("obs_dim")
        act_dim = r.u32("act_dim")
        if chunk == 0 or horizon == 0:
            raise DecodeError(at, "zero horizon or chunk in group header")
        if traj_count == 0 or traj_count > _MAX_REASONABLE_COUNT:
            raise DecodeError(at, f"bad traj_count {traj_count}")
        n_chunks = -(-horizon // chunk)  # ceil
        per_traj = 4 + 8 + 4 * n_chunks * (obs_dim + chunk * act_dim + 1)
        r.need(per_traj * traj_count, "trajectory records")
        obs = np.empty((traj_count, n_chunks, obs_dim), dtype=np.float32)
        actions = np.empty((traj_count, n_chunks, chunk * act_dim), dtype=np.float32)
        blp = np.empty((traj_count, n_chunks), dtype=np.float32)
        rewards = np.empty(traj_count, dtype=np.float32)
        behavior_version = 0
        for i in range(traj_count):
            rewards[i] = r.f32("reward")
            bv = r.u64("behavior_version")
            if i == 0:
                behavior_version = bv
            elif bv != behavior_version:
                raise DecodeError(r.pos - 8, "behavior_version differs within group")
            obs[i] = r.f32_array(n_chunks * obs_dim, "obs block").reshape(
                n_chunks, obs_dim)
            actions[i] = r.f32_array(
                n_chunks * chunk * act_dim, "action block").reshape(
                n_chunks, chunk * act_dim)
            blp[i] = r.f32_array(n_chunks, "behavior_log_prob block")
        groups.append(GroupBatch(
            group_id=group_id, horizon=horizon, chunk=chunk, obs=obs,
            actions=actions, behavior_log_prob=blp, rewards=rewards,
            behavior_version=behavior_version,
        ))
    return TrajectoryBatchMsg(policy_version=policy_version, groups=tuple(groups))


def _decode_metadata(r: _Reader) -> MetadataMsg:
    count = r.u32("entry_count")
    entries = []
    for _ in range(count):
        klen = r.u16("key_len")
        kraw = r.raw(klen, "key bytes")
        try:
            key = kraw.decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError(r.pos - klen, "key is not valid utf-8") from None
        vlen = r.u32("val_len")
        val = r.raw(vlen, "value bytes")
        entries.append((key, val))
    return MetadataMsg(entries=tuple(entries))


def _decode_weights(r: _Reader) -> ParamSnapshot:
    version = r.u64("version")
    at = r.pos
    count = r.u64("param_count")
    if count > _MAX_REASONABLE_COUNT:
        raise DecodeError(at, f"param_count {count} overflows the frame")
    params = r.f32_array(count, "parameter block")
    if not np.isfinite(params).all():
        bad = int(np.flatnonzero(~np.isfinite(params))[0])
        raise DecodeError(at + 8 + 4 * bad, "non-finite parameter")
    return snapshot_from_params(params, version)


def decode(buf: bytes):
    """Decode exactly one frame; raises DecodeError on any malformation."""
    buf = bytes(buf)
    r = _Reader(buf)
    r.need(4, "magic")
    if buf[0:4] != MAGIC:
        raise DecodeError(0, "bad magic")
    r.pos = 4
    version = r.u16("format_version")
    if version != FORMAT_VERSION:
        raise DecodeError(4, f"unsupported format_version {version}")
    msg_type = r.u8("msg_type")
    payload_len = r.u64("payload_len")
    if payload_len != len(buf) - HEADER_LEN:
        raise DecodeError(
            7, f"payload_len {payload_len} != actual {len(buf) - HEADER_LEN}")
    if msg_type == MSG_TRAJECTORY_BATCH:
        msg = _decode_trajectory_batch(r)
    elif msg_type == MSG_METADATA:
        msg = _decode_metadata(r)
    elif msg_type == MSG_WEIGHT_SNAPSHOT:
        msg = _decode_weights(r)
    elif msg_type == MSG_ACK:
        msg = AckMsg(epoch_id=r.u64("epoch_id"))
    else:
        raise DecodeError(6, f"unknown msg_type {msg_type}")
    if r.pos != len(buf):
        raise DecodeError(r.pos, f"{len(buf) - r.pos} trailing bytes")
    return msg


def messages_equal(a, b) -> bool:
    """Structural equality that compares array payloads bitwise."""
    if type(a) is not type(b):
        return False
    if isinstance(a, AckMsg):
        return a.epoch_id == b.epoch_id
    if isinstance(a, MetadataMsg):
        return a.entries == b.entries
    if isinstance(a, ParamSnapshot):
        return (a.version == b.version
                and a.params.tobytes() == b.params.tobytes())
    if isinstance(a, TrajectoryBatchMsg):
        if a.policy_version != b.policy_version or len(a.groups) != len(b.groups):
            return False
        for ga, gb in zip(a.groups, b.groups):
            if (ga.group_id != gb.group_id or ga.horizon != gb.horizon
                    or ga.chunk != gb.chunk
                    or ga.behavior_version != gb.behavior_version
                    or ga.obs.tobytes() != gb.obs.tobytes()
                    or ga.actions.tobytes() != gb.actions.tobytes()
                    or ga.behavior_log_prob.tobytes() != gb.behavior_log_prob.tobytes()
                    or ga.rewards.tobytes() != gb.rewards.tobytes()):
                return False
        return True
    raise TypeError(f"cannot compare {type(a)!r}")
