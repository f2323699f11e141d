"""Metric records, persistence, and summaries.

Records are JSON objects, one per line, each stamped with "schema": 1, a
"kind" (epoch, update, pool, run_summary) and a wall-clock "ts". The writer
is a single consumer thread fed by a queue so lanes never contend on the
file; reads tolerate a truncated final line (crash-consistent logs).
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass

from .core import ConfigError

SCHEMA = 1
KINDS = ("epoch", "update", "pool", "run_summary")


class MetricWriter:
    """Append-only JSONL sink; emit() is safe from any lane."""

    def __init__(self, path: str):
        self.path = path
        self._q: queue.Queue = queue.Queue()
        self._file = open(path, "a", encoding="utf-8")
        self._thread = threading.Thread(target=self._drain, name="metric-writer",
                                        daemon=True)
        self._thread.start()

    def emit(self, kind: str, **fields):
        if kind not in KINDS:
            raise ConfigError(f"unknown metric kind {kind!r}")
        rec = {"schema": SCHEMA, "kind": kind, "ts": time.time()}
        rec.update(fields)
        self._q.put(rec)

    def _drain(self):
        while True:
            rec = self._q.get()
            if rec is None:
                return
            self._file.write(json.dumps(rec, sort_keys=True) + "\n")
            self._file.flush()

    def close(self):
        self._q.put(None)
        self._thread.join(timeout=10)
        self._file.close()


def write_records(path: str, records: list):
    with open(path, "a", encoding="utf-8") as f:
        for rec in records:
            body = {"schema": SCHEMA, "ts": time.time()}
            body.update(rec)
            f.write(json.dumps(body, sort_keys=True) + "\n")


def read_records(path: str) -> list:
    """Parse a JSONL metrics file; a truncated final line is dropped."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        lines = f.readlines()
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            if i == len(lines) - 1:
                break  # interrupted write, tolerated
            raise ConfigError(f"corrupt metrics record at line {i + 1}")
    return records


@dataclass(frozen=True)
class ThroughputSummary:
    transitions_per_sec: float
    inference_steps_per_sec: float
    wall_time: float
    total_transitions: int
    total_inference_steps: int
    epochs: int

    def to_dict(self) -> dict:
        return {
            "transitions_per_sec": self.transitions_per_sec,
            "inference_steps_per_sec": self.inference_steps_per_sec,
            "wall_time": self.wall_time,
            "total_transitions": self.total_transitions,
            "total_inference_steps": self.total_inference_steps,
            "epochs": self.epochs,
        }


def summarize(records: list, warmup_epochs: int = 1) -> ThroughputSummary:
    """Totals over post-warmup epoch records; computes throughput both as
    transitions/s and inference-steps/s and asserts their chunk identity."""
    epochs = sorted((r for r in records if r.get("kind") == "epoch"),
                    key=lambda r: r["epoch"])
    post = epochs[warmup_epochs:]
    if not post:
        raise ConfigError("no post-warmup epochs")
    total_trans = sum(r["transitions"] for r in post)
    wall = sum(r["step_time"] for r in post)
    chunks = {r["chunk"] for r in post}
    if len(chunks) != 1:
        raise ConfigError(f"summary needs a constant chunk, saw {sorted(chunks)}")
    chunk = chunks.pop()
    total_infer = total_trans // chunk
    if total_infer * chunk != total_trans:
        raise ConfigError("transitions not divisible by chunk")
    tps = total_trans / max(wall, 1e-12)
    isps = total_infer / max(wall, 1e-12)
    return ThroughputSummary(
        transitions_per_sec=tps, inference_steps_per_sec=isps,
        wall_time=wall, total_transitions=total_trans,
        total_inference_steps=total_infer, epochs=len(post))


def success_rate_curve(records: list) -> list:
    """[(policy_version, success_rate)] using the most recent evaluation
    groups for each version (the last epoch sampled with that version)."""
    latest = {}
    order = {}
    for i, r in enumerate(records):
        if r.get("kind") != "epoch" or "success_rate" not in r:
            continue
        v = r["policy_version"]
        latest[v] = r["success_rate"]
        order[v] = i
    return [(v, latest[v]) for v in sorted(latest)]


def strip_volatile(records: list) -> list:
    """Records minus wall-clock fields, for determinism comparisons."""
    out = []
    for r in records:
        r = dict(r)
        r.pop("ts", None)
        out.append(r)
    return out
