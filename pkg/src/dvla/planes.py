"""The two decoupled transports: high-frequency Data Plane (trajectories)
and low-frequency Weight Control Plane (versioned snapshots).

In-process mode hands message objects across lanes without copying
(copy_counter stays 0); wire mode serializes per the binary frame format
(exactly one copy each for serialize and deserialize) and respects an
injected link profile: delivery >= latency + size/bandwidth, enforced by
delayed release in virtual time and by pacing in real time.

Channels are bounded FIFO with producer backpressure (block, never drop);
weight mailboxes are single-slot latest-wins. Every endpoint carries both a
real-time path and a virtual-time path: virtual callers pass their lane clock
(`now_v`) and get back the causally correct advanced clock.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum

from . import wire
from .core import ConfigError, ParamSnapshot, UsageError


class Plane(Enum):
    DATA = "data"
    CONTROL = "control"


class TransportMode(Enum):
    INPROC = "inproc"
    WIRE = "wire"


class ChannelClosed(Exception):
    """Shutdown signal for producers/consumers of a closed channel."""


class RunAborted(RuntimeError):
    """Raised out of blocking waits when the run-wide abort flag is set."""


@dataclass
class LinkProfile:
    latency_us: float = 0.0
    bandwidth_bps: float | None = None  # None = unlimited

    def validate(self):
        if self.latency_us < 0:
            raise ConfigError("link latency_us must be >= 0")
        if self.bandwidth_bps is not None and self.bandwidth_bps <= 0:
            raise ConfigError("link bandwidth_bps must be > 0 or null")

    def delay_s(self, nbytes: int) -> float:
        d = self.latency_us * 1e-6
        if self.bandwidth_bps is not None:
            d += nbytes / self.bandwidth_bps
        return d


def _plane_of(msg) -> set:
    """Planes a message type may travel on."""
    if isinstance(msg, wire.TrajectoryBatchMsg):
        return {Plane.DATA}
    if isinstance(msg, ParamSnapshot):
        return {Plane.CONTROL}
    if isinstance(msg, (wire.MetadataMsg, wire.AckMsg)):
        return {Plane.DATA, Plane.CONTROL}
    raise UsageError(f"not a plane message: {type(msg)!r}")


class Transport:
    """Copy/byte instrumentation plus the serialize/deserialize boundary."""

    def __init__(self, mode: TransportMode, plane: Plane,
                 profile: LinkProfile | None = None, name: str = ""):
        self.mode = mode
        self.plane = plane
        self.profile = profile if profile is not None else LinkProfile()
        self.profile.validate()
        self.name = name or f"{plane.value}-{mode.value}"
        self.copy_counter = 0
        self.bytes_counter = 0
        self._link_free_v = 0.0
        self._lock = threading.Lock()

    def inject_link_profile(self, latency_us: float, bandwidth_bps: float | None):
        prof = LinkProfile(latency_us=latency_us, bandwidth_bps=bandwidth_bps)
        prof.validate()
        self.profile = prof

    def check_plane(self, msg):
        if self.plane not in _plane_of(msg):
            raise UsageError(
                f"{type(msg).__name__} is not allowed on the {self.plane.value} plane"
            )

    def outbound(self, msg):
        """-> (payload, nbytes, delay_s). InProc ignores the link profile."""
        self.check_plane(msg)
        if self.mode is TransportMode.INPROC:
            return msg, 0, 0.0
        data = wire.encode(msg)
        with self._lock:
            self.copy_counter += 1
            self.bytes_counter += len(data)
        return data, len(data), self.profile.delay_s(len(data))

    def inbound(self, payload):
        if self.mode is TransportMode.INPROC:
            return payload
        msg = wire.decode(payload)
        with self._lock:
            self.copy_counter += 1
        return msg

    def schedule_v(self, start_v: float, delay: float) -> float:
        """Virtual-clock arrival stamp. Transfers on one wire link are
        serialized, so back-to-back sends queue behind each other."""
        if self.mode is TransportMode.INPROC or delay <= 0.0:
            return start_v + delay
        with self._lock:
            begin = max(start_v, self._link_free_v)
            self._link_free_v = begin + delay
            return self._link_free_v


class Channel:
    """Bounded FIFO with backpressure; single producer, single consumer.

    Virtual-time contract: put(msg, now_v) returns the producer clock after
    the enqueue (it advances past the pop time of the item whose slot it
    reuses when the queue was full); take(now_v) returns
    (msg, consumer clock advanced past the item's delivery time, delay_s).
    """

    def __init__(self, capacity: int, transport: Transport, name: str = "chan",
                 abort_event: threading.Event | None = None):
        if capacity < 1:
            raise ConfigError(f"channel capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.transport = transport
        self.name = name
        self.abort = abort_event
        self._items = deque()  # (payload, avail, delay_s); avail wall or virtual
        self._releases = deque()  # virtual pop times, ring of reused slots
        self._puts = 0
        self._closed = False
        self._cond = threading.Condition()
        self._taker_starved = False

    def _check_abort(self):
        if self.abort is not None and self.abort.is_set():
            raise RunAborted(f"abort during wait on channel {self.name}")

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def put(self, msg, now_v: float | None = None, timeout: float | None = None):
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while len(self._items) >= self.capacity and not self._closed:
                self._check_abort()
                if deadline is not None and time.monotonic() >= deadline:
                    raise TimeoutError(f"put timed out on {self.name}")
                self._cond.wait(0.05)
            if self._closed:
                raise ChannelClosed(self.name)
            payload, nbytes, delay = self.transport.outbound(msg)
            if now_v is None:
                avail = time.perf_counter() + delay
                enter = None
            else:
                enter = now_v
                if self._puts >= self.capacity:
                    enter = max(enter, self._releases.popleft())
                avail = self.transport.schedule_v(enter, delay)
            self._puts += 1
            self._items.append((payload, avail, delay))
            self._cond.notify_all()
            return enter

    def take(self, now_v: float | None = None, timeout: float | None = None):
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            try:
                while True:
                    self._check_abort()
                    if self._items:
                        if now_v is None:
                            # real-time pacing: head not deliverable yet
                            lag = self._items[0][1] - time.perf_counter()
                            if lag > 0:
                                self._cond.wait(min(lag, 0.05))
                                continue
                        break
                    if self._closed:
                        raise ChannelClosed(self.name)
                    if deadline is not None and time.monotonic() >= deadline:
                        raise TimeoutError(f"take timed out on {self.name}")
                    self._taker_starved = True
                    self._cond.notify_all()
                    self._cond.wait(0.05)
            finally:
                self._taker_starved = False
            payload, avail, delay = self._items.popleft()
            if now_v is None:
                new_v = None
            else:
                new_v = max(now_v, avail)
                self._releases.append(new_v)
            self._cond.notify_all()
        msg = self.transport.inbound(payload)
        return msg, new_v, delay

    def __len__(self):
        with self._cond:
            return len(self._items)

    def consumer_starved(self) -> bool:
        """True while the consumer is blocked on an empty queue. With a
        single producer this stays true until that producer acts again."""
        with self._cond:
            return self._taker_starved and not self._items


class WeightMailbox:
    """Single-slot latest-wins snapshot mailbox (one receiver lane)."""

    def __init__(self, transport: Transport, name: str = "mailbox",
                 abort_event: threading.Event | None = None):
        self.transport = transport
        self.name = name
        self.abort = abort_event
        self._slot = None  # (payload, version, avail)
        self._cond = threading.Condition()
        self._last_seen = -1

    def deliver(self, payload, version: int, avail: float):
        with self._cond:
            if self._slot is None or version > self._slot[1]:
                self._slot = (payload, version, avail)
            self._cond.notify_all()

    def take_newest(self, now_v: float | None = None,
                    timeout: float | None = None):
        """Block for a snapshot newer than anything taken before; returns
        (snapshot, clock) where clock advances past delivery in virtual mode.
        Returns None on timeout."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                if self.abort is not None and self.abort.is_set():
                    raise RunAborted(f"abort during wait on mailbox {self.name}")
                if self._slot is not None and self._slot[1] > self._last_seen:
                    if now_v is None:
                        lag = self._slot[2] - time.perf_counter()
                        if lag > 0:
                            self._cond.wait(min(lag, 0.05))
                            continue
                    break
                if deadline is not None and time.monotonic() >= deadline:
                    return None
                self._cond.wait(0.05)
            payload, version, avail = self._slot
            self._slot = None
            self._last_seen = version
        msg = self.transport.inbound(payload)
        new_v = None if now_v is None else max(now_v, avail)
        return msg, new_v


class ControlPlane:
    """Weight distribution fan-out with a monotonicity guard."""

    def __init__(self, transport: Transport):
        if transport.plane is not Plane.CONTROL:
            raise UsageError("control plane needs a control transport")
        self.transport = transport
        self.subscribers: list[WeightMailbox] = []
        self.last_version = -1

    def subscribe(self, name: str = "sub",
                  abort_event: threading.Event | None = None) -> WeightMailbox:
        box = WeightMailbox(self.transport, name=name, abort_event=abort_event)
        self.subscribers.append(box)
        return box

    def broadcast(self, snap: ParamSnapshot, now_v: float | None = None,
                  avail_v: float | None = None):
        """Serialize once per subscriber (wire mode), deliver latest-wins.

        Returns the last delivery stamp. Callers that already reserved the
        link (by calling schedule_v at publish time) pass the reserved stamp
        as avail_v so the transfer is not scheduled twice.
        """
        if not isinstance(snap, ParamSnapshot):
            raise UsageError("control plane broadcasts ParamSnapshot only")
        if snap.version <= self.last_version:
            raise UsageError(
                f"version regression: broadcast {snap.version} after "
                f"{self.last_version}"
            )
        self.last_version = snap.version
        base = time.perf_counter() if now_v is None else now_v
        avail = base
        for box in self.subscribers:
            payload, nbytes, delay = self.transport.outbound(snap)
            if avail_v is not None:
                avail = avail_v
            elif now_v is None:
                avail = base + delay
            else:
                avail = self.transport.schedule_v(base, delay)
            box.deliver(payload, snap.version, avail)
        return avail
