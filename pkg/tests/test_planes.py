"""Transport planes: copy accounting, link pacing, channels, mailboxes."""

import threading
import time

import numpy as np
import pytest

from dvla.core import Rng, UsageError, snapshot_from_params
from dvla.planes import (
    Channel,
    ChannelClosed,
    ControlPlane,
    LinkProfile,
    Plane,
    RunAborted,
    Transport,
    TransportMode,
    WeightMailbox,
)
from dvla.core import ConfigError
from dvla import wire

from helpers import make_gradient_case


def _traj_msg(seed=0):
    _, batches = make_gradient_case(seed)
    return wire.TrajectoryBatchMsg(policy_version=1, groups=tuple(batches))


def _snap(version=1, n=20):
    return snapshot_from_params(Rng(7).gaussian(n).astype(np.float32), version)


def _data(mode=TransportMode.INPROC, profile=None):
    return Transport(mode, Plane.DATA, profile=profile)


def _control(mode=TransportMode.INPROC, profile=None):
    return Transport(mode, Plane.CONTROL, profile=profile)


# ------------------------------------------------------------ plane isolation

def test_snapshots_are_banned_from_the_data_plane():
    with pytest.raises(UsageError, match="not allowed on the data plane"):
        _data().outbound(_snap())


def test_trajectories_are_banned_from_the_control_plane():
    with pytest.raises(UsageError, match="not allowed on the control plane"):
        _control().outbound(_traj_msg())


def test_metadata_and_acks_ride_both_planes():
    for t in (_data(), _control()):
        t.outbound(wire.MetadataMsg(entries=()))
        t.outbound(wire.AckMsg(epoch_id=0))
    assert _data().copy_counter == 0


def test_non_messages_are_rejected():
    with pytest.raises(UsageError, match="not a plane message"):
        _data().outbound(object())


def test_control_plane_requires_control_transport():
    with pytest.raises(UsageError, match="control transport"):
        ControlPlane(_data())


# ------------------------------------------------------------- copy semantics

def test_inproc_is_zero_copy_identity():
    t = _data()
    msg = _traj_msg()
    payload, nbytes, delay = t.outbound(msg)
    assert payload is msg
    assert nbytes == 0 and delay == 0.0
    assert t.inbound(payload) is msg
    assert t.copy_counter == 0 and t.bytes_counter == 0


def test_wire_round_trip_counts_two_copies():
    t = _data(TransportMode.WIRE)
    msg = _traj_msg()
    payload, nbytes, _ = t.outbound(msg)
    assert isinstance(payload, bytes)
    assert nbytes == len(payload) == len(wire.encode(msg))
    back = t.inbound(payload)
    assert wire.messages_equal(back, msg)
    assert t.copy_counter == 2
    assert t.bytes_counter == nbytes


# ---------------------------------------------------------------- link timing

def test_link_profile_delay_formula():
    prof = LinkProfile(latency_us=100.0, bandwidth_bps=100e6)
    assert prof.delay_s(1 << 20) == pytest.approx(100e-6 + (1 << 20) / 100e6)
    assert LinkProfile(latency_us=50.0).delay_s(1 << 30) == pytest.approx(50e-6)


def test_link_profile_validation():
    with pytest.raises(ConfigError, match="latency_us"):
        LinkProfile(latency_us=-1.0).validate()
    with pytest.raises(ConfigError, match="bandwidth_bps"):
        LinkProfile(bandwidth_bps=0.0).validate()


def test_wire_transfers_serialize_on_the_link():
    t = _data(TransportMode.WIRE, profile=LinkProfile(latency_us=1e6))
    # two back-to-back sends from the same start queue behind each other
    assert t.schedule_v(0.0, 1.0) == pytest.approx(1.0)
    assert t.schedule_v(0.0, 1.0) == pytest.approx(2.0)
    # a later start after the link drained does not queue
    assert t.schedule_v(10.0, 1.0) == pytest.approx(11.0)


def test_inproc_schedule_never_queues():
    t = _data()
    assert t.schedule_v(0.0, 1.0) == 1.0
    assert t.schedule_v(0.0, 1.0) == 1.0


def test_inject_link_profile_validates():
    t = _data(TransportMode.WIRE)
    t.inject_link_profile(10.0, 1e9)
    assert t.profile.latency_us == 10.0
    with pytest.raises(ConfigError):
        t.inject_link_profile(-5.0, None)


# -------------------------------------------------------------------- channel

def test_channel_fifo_order():
    ch = Channel(8, _data())
    for i in range(5):
        ch.put(wire.AckMsg(epoch_id=i))
    assert len(ch) == 5
    got = [ch.take()[0].epoch_id for _ in range(5)]
    assert got == [0, 1, 2, 3, 4]


def test_channel_capacity_validation():
    with pytest.raises(ConfigError, match="capacity"):
        Channel(0, _data())


def test_channel_put_timeout_when_full():
    ch = Channel(1, _data())
    ch.put(wire.AckMsg(epoch_id=0))
    with pytest.raises(TimeoutError, match="put timed out"):
        ch.put(wire.AckMsg(epoch_id=1), timeout=0.05)


def test_channel_take_timeout_when_empty():
    ch = Channel(1, _data())
    with pytest.raises(TimeoutError, match="take timed out"):
        ch.take(timeout=0.05)


def test_channel_close_wakes_both_sides():
    ch = Channel(1, _data())
    ch.close()
    with pytest.raises(ChannelClosed):
        ch.put(wire.AckMsg(epoch_id=0))
    with pytest.raises(ChannelClosed):
        ch.take()


def test_channel_abort_raises_out_of_wait():
    abort = threading.Event()
    abort.set()
    ch = Channel(1, _data(), abort_event=abort)
    ch._items.append((wire.AckMsg(epoch_id=0), 0.0, 0.0))  # full queue
    with pytest.raises(RunAborted):
        ch.put(wire.AckMsg(epoch_id=1))
    with pytest.raises(RunAborted):
        Channel(1, _data(), abort_event=abort).take()


def test_channel_virtual_backpressure_reuses_slot_release():
    ch = Channel(2, _data())
    assert ch.put(wire.AckMsg(epoch_id=0), now_v=0.0) == 0.0
    assert ch.put(wire.AckMsg(epoch_id=1), now_v=0.0) == 0.0
    msg, consumer_v, _ = ch.take(now_v=5.0)
    assert msg.epoch_id == 0 and consumer_v == 5.0
    # queue was at capacity once: the third put inherits the freed slot's
    # pop stamp, modeling the producer blocking until the consumer popped
    assert ch.put(wire.AckMsg(epoch_id=2), now_v=1.0) == 5.0


def test_channel_virtual_take_advances_past_delivery():
    t = _data(TransportMode.WIRE, profile=LinkProfile(latency_us=2e6))
    ch = Channel(4, t)
    ch.put(wire.AckMsg(epoch_id=0), now_v=1.0)
    msg, consumer_v, delay = ch.take(now_v=0.0)
    assert msg.epoch_id == 0
    assert delay == pytest.approx(2.0)
    assert consumer_v == pytest.approx(3.0)  # sent at 1.0 + 2.0s link


def test_channel_real_time_pacing_delays_delivery():
    t = _data(TransportMode.WIRE, profile=LinkProfile(latency_us=80_000))
    ch = Channel(4, t)
    ch.put(wire.AckMsg(epoch_id=0))
    t0 = time.perf_counter()
    ch.take()
    assert time.perf_counter() - t0 >= 0.05


def test_consumer_starvation_flag():
    ch = Channel(2, _data())
    assert not ch.consumer_starved()
    got = []
    thread = threading.Thread(target=lambda: got.append(ch.take(timeout=5.0)))
    thread.start()
    deadline = time.monotonic() + 2.0
    while not ch.consumer_starved() and time.monotonic() < deadline:
        time.sleep(0.005)
    assert ch.consumer_starved()
    ch.put(wire.AckMsg(epoch_id=9))
    thread.join(timeout=5.0)
    assert got and got[0][0].epoch_id == 9
    assert not ch.consumer_starved()


# -------------------------------------------------------------------- mailbox

def test_mailbox_latest_wins_and_monotone():
    box = WeightMailbox(_control())
    box.deliver(_snap(1), 1, 0.0)
    box.deliver(_snap(3), 3, 0.0)
    box.deliver(_snap(2), 2, 0.0)  # stale: must not displace v3
    msg, _ = box.take_newest()
    assert msg.version == 3
    # an older redelivery never surfaces after v3 was consumed
    box.deliver(_snap(2), 2, 0.0)
    assert box.take_newest(timeout=0.05) is None


def test_mailbox_abort():
    abort = threading.Event()
    abort.set()
    box = WeightMailbox(_control(), abort_event=abort)
    with pytest.raises(RunAborted):
        box.take_newest(timeout=1.0)


def test_mailbox_virtual_clock_advances_past_delivery():
    box = WeightMailbox(_control())
    box.deliver(_snap(1), 1, 4.5)
    msg, new_v = box.take_newest(now_v=2.0)
    assert msg.version == 1
    assert new_v == 4.5
    box.deliver(_snap(2), 2, 1.0)
    _, new_v = box.take_newest(now_v=6.0)
    assert new_v == 6.0


# -------------------------------------------------------------- control plane

def test_broadcast_fans_out_bytes_per_subscriber():
    t = _control(TransportMode.WIRE)
    plane = ControlPlane(t)
    boxes = [plane.subscribe(name=f"sub{i}") for i in range(4)]
    snap = _snap(1, n=25)
    plane.broadcast(snap)
    per_frame = len(wire.encode(snap))
    assert per_frame == wire.weight_frame_size(25)
    assert t.bytes_counter == 4 * per_frame
    assert t.copy_counter == 4
    for box in boxes:
        msg, _ = box.take_newest()
        assert msg.version == 1


def test_broadcast_inproc_is_zero_copy():
    t = _control()
    plane = ControlPlane(t)
    box = plane.subscribe()
    snap = _snap(1)
    plane.broadcast(snap)
    msg, _ = box.take_newest()
    assert msg is snap
    assert t.copy_counter == 0 and t.bytes_counter == 0


def test_broadcast_rejects_version_regression():
    plane = ControlPlane(_control())
    plane.broadcast(_snap(5))
    with pytest.raises(UsageError, match="version regression"):
        plane.broadcast(_snap(5))


def test_broadcast_rejects_non_snapshots():
    plane = ControlPlane(_control())
    with pytest.raises(UsageError, match="ParamSnapshot only"):
        plane.broadcast(wire.AckMsg(epoch_id=0))


def test_broadcast_serializes_deliveries_on_one_link():
    t = _control(TransportMode.WIRE, profile=LinkProfile(latency_us=1e6))
    plane = ControlPlane(t)
    first = plane.subscribe()
    second = plane.subscribe()
    last = plane.broadcast(_snap(1, n=10), now_v=0.0)
    _, v1 = first.take_newest(now_v=0.0)
    _, v2 = second.take_newest(now_v=0.0)
    assert v1 == pytest.approx(1.0, abs=1e-3)
    assert v2 == pytest.approx(2.0, abs=1e-3)
    assert last == pytest.approx(v2)
