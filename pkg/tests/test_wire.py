"""Wire frame encode/decode: round trips, malformed-input rejection, fuzz."""

import struct

import numpy as np
import pytest

from dvla.core import Rng, snapshot_from_params
from dvla.wire import (
    AckMsg,
    DecodeError,
    HEADER_LEN,
    MAGIC,
    MetadataMsg,
    TrajectoryBatchMsg,
    decode,
    encode,
    frame_size,
    messages_equal,
    weight_frame_size,
)

from helpers import make_gradient_case


def _sample_batch_msg(seed=0):
    _, batches = make_gradient_case(seed)
    return TrajectoryBatchMsg(policy_version=41, groups=tuple(batches))


def _sample_snapshot(n=37, seed=1):
    return snapshot_from_params(Rng(seed).gaussian(n).astype(np.float32), 9)


# ----------------------------------------------------------------- round trips

def test_round_trip_all_message_types():
    meta = MetadataMsg(entries=(("role", b"trainer"), ("role", b"dup-key"),
                                ("blob", bytes(range(256)))))
    for msg in (_sample_batch_msg(), meta, _sample_snapshot(), AckMsg(epoch_id=77)):
        buf = encode(msg)
        back = decode(buf)
        assert messages_equal(msg, back)
        assert encode(back) == buf  # re-encode is bitwise stable


def test_empty_metadata_frame_is_19_bytes():
    buf = encode(MetadataMsg(entries=()))
    assert len(buf) == 19
    assert buf[:4] == MAGIC
    assert frame_size(MetadataMsg(entries=())) == 19


def test_weight_frame_size_formula():
    snap = _sample_snapshot(n=123)
    assert len(encode(snap)) == weight_frame_size(123)
    assert weight_frame_size(0) == HEADER_LEN + 16


def test_trajectory_round_trip_preserves_group_payloads():
    msg = _sample_batch_msg(3)
    back = decode(encode(msg))
    assert back.policy_version == 41
    assert len(back.groups) == 2
    for ga, gb in zip(msg.groups, back.groups):
        assert gb.group_id == ga.group_id
        assert gb.behavior_version == ga.behavior_version
        assert gb.obs.tobytes() == ga.obs.tobytes()
        assert gb.actions.tobytes() == ga.actions.tobytes()
        assert gb.rewards.tobytes() == ga.rewards.tobytes()


def test_encode_rejects_foreign_types():
    with pytest.raises(TypeError):
        encode({"not": "a message"})


# ------------------------------------------------------------------ rejection

def test_bad_magic_names_offset_zero():
    buf = b"XVLA" + encode(AckMsg(epoch_id=1))[4:]
    with pytest.raises(DecodeError, match="bad magic at offset 0") as exc:
        decode(buf)
    assert exc.value.offset == 0


def test_unsupported_format_version():
    buf = bytearray(encode(AckMsg(epoch_id=1)))
    struct.pack_into("<H", buf, 4, 9)
    with pytest.raises(DecodeError, match="unsupported format_version 9"):
        decode(bytes(buf))


def test_unknown_msg_type():
    buf = bytearray(encode(AckMsg(epoch_id=1)))
    buf[6] = 250
    with pytest.raises(DecodeError, match="unknown msg_type 250") as exc:
        decode(bytes(buf))
    assert exc.value.offset == 6


def test_payload_length_mismatch():
    buf = encode(AckMsg(epoch_id=1))
    with pytest.raises(DecodeError, match="payload_len"):
        decode(buf[:-1])
    with pytest.raises(DecodeError, match="payload_len"):
        decode(buf + b"\x00")


def test_trailing_bytes_detected():
    payload = struct.pack("<Q", 5) + b"\xde\xad\xbe\xef"
    buf = (MAGIC + struct.pack("<HBQ", 1, 4, len(payload)) + payload)
    with pytest.raises(DecodeError, match="4 trailing bytes"):
        decode(buf)


def test_truncated_parameter_block():
    payload = struct.pack("<QQ", 3, 10) + b"\x00" * 8  # claims 10, carries 2
    buf = MAGIC + struct.pack("<HBQ", 1, 3, len(payload)) + payload
    with pytest.raises(DecodeError, match="truncated parameter block"):
        decode(buf)


def test_absurd_param_count_rejected_before_allocation():
    payload = struct.pack("<QQ", 3, 1 << 40)
    buf = MAGIC + struct.pack("<HBQ", 1, 3, len(payload)) + payload
    with pytest.raises(DecodeError, match="overflows the frame"):
        decode(buf)


def test_non_finite_parameter_named_by_offset():
    params = np.arange(6, dtype="<f4")
    params[3] = np.nan
    payload = struct.pack("<QQ", 0, 6) + params.tobytes()
    buf = MAGIC + struct.pack("<HBQ", 1, 3, len(payload)) + payload
    with pytest.raises(DecodeError, match="non-finite parameter") as exc:
        decode(buf)
    # version(8) sits before the count field; the bad float is index 3
    assert exc.value.offset == HEADER_LEN + 8 + 8 + 4 * 3


def test_zero_chunk_group_header_rejected():
    buf = bytearray(encode(_sample_batch_msg()))
    # group header starts after payload_version(8)+group_count(4):
    # group_id u64, traj_count u32, horizon u32, chunk u32
    chunk_at = HEADER_LEN + 12 + 8 + 4 + 4
    struct.pack_into("<I", buf, chunk_at, 0)
    with pytest.raises(DecodeError, match="zero horizon or chunk"):
        decode(bytes(buf))


def test_zero_traj_count_rejected():
    buf = bytearray(encode(_sample_batch_msg()))
    struct.pack_into("<I", buf, HEADER_LEN + 12 + 8, 0)
    with pytest.raises(DecodeError, match="bad traj_count 0"):
        decode(bytes(buf))


def test_mixed_behavior_version_rejected():
    msg = _sample_batch_msg()
    g = msg.groups[0]
    n_chunks = g.obs.shape[1]
    per_traj = 4 + 8 + 4 * n_chunks * (g.obs.shape[2] + g.actions.shape[2] + 1)
    buf = bytearray(encode(msg))
    traj1_bv = HEADER_LEN + 12 + 28 + per_traj + 4
    struct.pack_into("<Q", buf, traj1_bv, 999)
    with pytest.raises(DecodeError, match="behavior_version differs"):
        decode(bytes(buf))


def test_non_utf8_metadata_key():
    buf = bytearray(encode(MetadataMsg(entries=(("abc", b"v"),))))
    key_at = HEADER_LEN + 4 + 2
    buf[key_at] = 0xFF
    buf[key_at + 1] = 0xFE
    with pytest.raises(DecodeError, match="not valid utf-8"):
        decode(bytes(buf))


# ----------------------------------------------------------------------- fuzz

def test_fuzzed_buffers_only_raise_decode_error():
    rng = np.random.Generator(np.random.Philox(key=99))
    seeds = [encode(m) for m in (_sample_batch_msg(), _sample_snapshot(),
                                 MetadataMsg(entries=(("k", b"v"),)),
                                 AckMsg(epoch_id=3))]
    survived = 0
    for trial in range(2000):
        if trial % 2 == 0:
            buf = bytearray(seeds[trial % len(seeds)])
            for _ in range(int(rng.integers(1, 8))):
                buf[int(rng.integers(len(buf)))] = int(rng.integers(256))
            buf = bytes(buf[:int(rng.integers(1, len(buf) + 1))])
        else:
            buf = rng.integers(0, 256, int(rng.integers(1, 200)),
                               dtype=np.uint8).tobytes()
        try:
            out = decode(buf)
            survived += 1
            assert encode(out) == buf  # anything accepted must round-trip
        except DecodeError:
            pass
    assert survived < 200  # mutations overwhelmingly produce rejects


def test_fuzzed_round_trips_bitwise():
    rng = Rng(512)
    for trial in range(300):
        kind = trial % 3
        if kind == 0:
            msg = _sample_batch_msg(trial)
        elif kind == 1:
            n = int(rng.substream("n", trial).integers(1, 200))
            msg = snapshot_from_params(
                rng.substream("p", trial).gaussian(n).astype(np.float32), trial)
        else:
            entries = tuple(
                (f"key{j}", bytes(rng.substream("v", trial, j).integers(
                    0, 256, j + 1).astype(np.uint8)))
                for j in range(trial % 5))
            msg = MetadataMsg(entries=entries)
        buf = encode(msg)
        assert messages_equal(decode(buf), msg)
        assert encode(decode(buf)) == buf


def test_messages_equal_discriminates():
    a = AckMsg(epoch_id=1)
    assert not messages_equal(a, AckMsg(epoch_id=2))
    assert not messages_equal(a, MetadataMsg(entries=()))
    s1 = _sample_snapshot(seed=1)
    s2 = _sample_snapshot(seed=2)
    assert not messages_equal(s1, s2)
