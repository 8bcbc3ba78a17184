"""Deterministic discrete-event network simulator.

Virtual time is integer ticks.  An adversary policy decides, per message,
the delivery delay (or drop) subject to partial synchrony: after the global
stabilization time, traffic between honest participants must arrive within
the bound delta.  Everything is a pure function of (seed, config, scripts),
so two runs with the same inputs produce byte-identical traces.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

from .consensus import Message, MsgKind


class LivelockError(Exception):
    """Event budget exhausted: the run is not making progress."""


@dataclass(frozen=True)
class SimConfig:
    n: int
    f: int
    gst: int = 0
    delta: int = 1
    seed: int = 0
    max_events: int = 2_000_000

    def __post_init__(self):
        if self.n != 3 * self.f + 1:
            raise ValueError("requires n = 3f + 1")
        if self.gst < 0 or self.delta < 1:
            raise ValueError("gst must be >= 0 and delta >= 1")


@dataclass
class AdversaryPolicy:
    """Delay/drop control.  Before GST the adversary may drop or stretch
    messages touching the configured targets; after GST honest-to-honest
    delivery is bounded by delta.  Payloads are never mutated in transit:
    receivers authenticate, so mutation would only waste the message."""

    corrupt: frozenset = frozenset()
    drop_pre_gst_involving: frozenset = frozenset()
    pre_gst_drop_prob: float = 0.0
    pre_gst_max_delay: Optional[int] = None  # defaults to 4 * delta
    duplicate_prob: float = 0.0

    def validate(self, config: SimConfig):
        if len(self.corrupt) > config.f:
            raise ValueError(f"at most f={config.f} participants may be corrupted")

    def schedule(self, src: int, dst: int, now: int, config: SimConfig,
                 rng: random.Random) -> Optional[int]:
        """Return the delivery delay in ticks, or None to drop."""
        if now >= config.gst:
            return rng.randint(1, config.delta)
        if src in self.drop_pre_gst_involving or dst in self.drop_pre_gst_involving:
            return None
        if self.pre_gst_drop_prob and rng.random() < self.pre_gst_drop_prob:
            return None
        hi = self.pre_gst_max_delay if self.pre_gst_max_delay is not None else 4 * config.delta
        return rng.randint(1, max(1, hi))


@dataclass
class Trace:
    records: list = dc_field(default_factory=list)
    flags: dict = dc_field(default_factory=dict)

    def add(self, time: int, kind: str, src, dst, summary: str):
        self.records.append(
            {"time": time, "kind": kind, "src": src, "dst": dst, "summary": summary}
        )

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def commits(self):
        return [r for r in self.records if r["kind"] == "commit"]


def _summarize(m: Message) -> str:
    return f"{m.kind.name} v={m.view} sq={m.sq}"


class Simulator:
    """Single-threaded event loop owning all replica states and the clock."""

    def __init__(self, config: SimConfig, nodes: dict, adversary: AdversaryPolicy,
                 trace_messages: bool = False):
        adversary.validate(config)
        self.config = config
        self.nodes = nodes
        self.adversary = adversary
        self.rng = random.Random(config.seed)
        self.trace = Trace()
        self.trace_messages = trace_messages
        self.clock = 0
        self._heap: list = []
        self._counter = 0
        self._live_timers: dict = {}  # (node_id, name) -> token
        self.observers: list[Callable] = []  # eavesdroppers: fn(src, dst, msg, now)
        self.on_commit_hooks: list[Callable] = []

    # -- scheduling -------------------------------------------------------

    def _push(self, time: int, item):
        heapq.heappush(self._heap, (time, self._counter, item))
        self._counter += 1

    def _dispatch_sends(self, src: int, sends):
        for dst, msg in sends:
            for obs in self.observers:
                obs(src, dst, msg, self.clock)
            delay = self.adversary.schedule(src, dst, self.clock, self.config, self.rng)
            if delay is None:
                self.trace.add(self.clock, "drop", src, dst, _summarize(msg))
                continue
            honest = (src not in self.adversary.corrupt
                      and dst not in self.adversary.corrupt)
            if self.clock >= self.config.gst and honest:
                assert delay <= self.config.delta, "post-GST delay bound violated"
            self._push(self.clock + delay, ("deliver", dst, src, msg))
            if self.adversary.duplicate_prob and self.rng.random() < self.adversary.duplicate_prob:
                self._push(self.clock + delay + self.rng.randint(1, self.config.delta),
                           ("deliver", dst, src, msg))
            if self.trace_messages:
                self.trace.add(self.clock, "send", src, dst, _summarize(msg))

    def _apply_timer_ops(self, node_id: int, ops):
        for op in ops:
            if op[0] == "set":
                _, name, delay = op
                token = self._counter
                self._live_timers[(node_id, name)] = token
                self._push(self.clock + max(1, delay), ("timer", node_id, name, token))
            else:
                self._live_timers.pop((node_id, op[1]), None)

    def collect(self, node_id: int):
        """Drain a node's outputs into the event queue (also used to pick up
        sends produced before the loop starts)."""
        sends, timer_ops = self.nodes[node_id].drain()
        self._dispatch_sends(node_id, sends)
        self._apply_timer_ops(node_id, timer_ops)

    def collect_all(self):
        for node_id in self.nodes:
            self.collect(node_id)

    def schedule_call(self, time: int, fn: Callable):
        """Run an external stimulus (e.g. a client submitting a request) at
        the given virtual time."""
        self._push(max(time, self.clock), ("call", fn))

    # -- main loop ----------------------------------------------------------

    def run(self, until_time: Optional[int] = None, until: Optional[Callable] = None) -> Trace:
        self.collect_all()
        events = 0
        while self._heap:
            if until is not None and until():
                break
            time, _, item = heapq.heappop(self._heap)
            if until_time is not None and time > until_time:
                break
            self.clock = time
            events += 1
            if events > self.config.max_events:
                raise LivelockError(
                    f"exceeded {self.config.max_events} events at t={self.clock}")
            if item[0] == "call":
                item[1]()
                self.collect_all()
            elif item[0] == "deliver":
                _, dst, src, msg = item
                if self.trace_messages:
                    self.trace.add(self.clock, "deliver", src, dst, _summarize(msg))
                self.nodes[dst].on_message(msg, self.clock)
                self.collect(dst)
            else:
                _, node_id, name, token = item
                if self._live_timers.get((node_id, name)) != token:
                    continue  # cancelled or superseded
                self._live_timers.pop((node_id, name), None)
                self.nodes[node_id].on_timer(name, self.clock)
                self.collect(node_id)
        return self.trace

    def record_commit(self, rid: int, sq: int, view: int, digest: bytes):
        self.trace.add(self.clock, "commit", rid, rid,
                       f"sq={sq} v={view} d={digest.hex()[:16]}")


# -- Byzantine behavior wrappers -------------------------------------------


class SilentNode:
    """Crashes-at-birth behavior: receives everything, says nothing."""

    def on_message(self, m, now=0):
        pass

    def on_timer(self, name, now=0):
        pass

    def drain(self):
        return [], []


class EquivocatingPrimary:
    """Wraps a replica; whenever the inner replica emits a PRE_PREPARE, half
    the destinations instead get a conflicting one whose batch omits the
    last request (or, if the batch is empty, a fabricated self request)."""

    def __init__(self, inner):
        self.inner = inner

    def on_message(self, m, now=0):
        self.inner.on_message(m, now)

    def on_timer(self, name, now=0):
        self.inner.on_timer(name, now)

    def _fork(self, m: Message, dst: int):
        from .consensus import batch_digest, request_tag

        if m.kind != MsgKind.PRE_PREPARE or dst % 2 == 0:
            return m
        form, digest, raw = m.payload
        if form != "raw":
            return m
        raw = dict(raw)
        batch_now = [t for prop in raw.values() for t in prop]
        if batch_now:
            victim = sorted(set(batch_now))[-1]
            alt_raw = {
                proposer: tuple(t for t in prop if t != victim)
                for proposer, prop in raw.items()
            }
        else:
            fake = b"equivocation-filler"
            rtag = request_tag(self.inner.keyring, self.inner.rid, m.sq, fake)
            triple = (self.inner.rid, fake, rtag)
            alt_raw = {proposer: prop + (triple,) for proposer, prop in raw.items()}
        from .consensus import aggregate

        alt_batch = aggregate(alt_raw, self.inner.f)
        alt_digest = batch_digest(alt_batch)
        if alt_digest == digest:
            return m
        payload = ("raw", alt_digest, tuple(sorted(alt_raw.items())))
        body = Message(kind=m.kind, view=m.view, sq=m.sq, sender=m.sender, payload=payload)
        return Message(kind=m.kind, view=m.view, sq=m.sq, sender=m.sender, payload=payload,
                       tag=self.inner.keyring.tag(self.inner.rid, body.body_bytes()))

    def drain(self):
        sends, timers = self.inner.drain()
        return [(dst, self._fork(msg, dst)) for dst, msg in sends], timers


class InconsistentSender:
    """Wraps a replica; REQUEST broadcasts carry different payloads to
    different destinations (the classic inconsistent dealer)."""

    def __init__(self, inner, variants: Callable[[int, bytes], bytes]):
        self.inner = inner
        self.variants = variants

    def on_message(self, m, now=0):
        self.inner.on_message(m, now)

    def on_timer(self, name, now=0):
        self.inner.on_timer(name, now)

    def _mutate(self, m: Message, dst: int):
        from .consensus import request_tag

        if m.kind != MsgKind.REQUEST:
            return m
        req, _ = m.payload
        alt = self.variants(dst, req)
        if alt == req:
            return m
        rtag = request_tag(self.inner.keyring, self.inner.rid, m.sq, alt)
        payload = (alt, rtag)
        body = Message(kind=m.kind, view=m.view, sq=m.sq, sender=m.sender, payload=payload)
        return Message(kind=m.kind, view=m.view, sq=m.sq, sender=m.sender, payload=payload,
                       tag=self.inner.keyring.tag(self.inner.rid, body.body_bytes()))

    def drain(self):
        sends, timers = self.inner.drain()
        return [(dst, self._mutate(msg, dst)) for dst, msg in sends], timers
