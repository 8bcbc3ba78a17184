"""Event-driven BFT replica with a proposal-batching phase before PBFT.

Participants submit requests for a slot; every replica batches the requests
it has seen into an initial proposal for the primary, which merges proposals
from more than 2f replicas into one batch (keeping requests that appear in
more than f proposals) and drives the usual pre-prepare / prepare / commit
phases.  A PBFT-style view change with prepared-certificate carryover handles
faulty primaries.

Each replica is a pure state machine: one event in (message or timer fire),
outbound messages and timer operations out.  The simulator owns time and
transport; replicas never block or sleep.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, field as dc_field
from enum import IntEnum
from typing import Optional

from . import wire
from .crypto import KeyRing


class MsgKind(IntEnum):
    REQUEST = 1
    PRE_PROPOSE = 2
    PRE_PREPARE = 3
    PREPARE = 4
    COMMIT = 5
    VIEW_CHANGE = 6
    NEW_VIEW = 7


# A request inside proposals/batches travels as (origin, req, rtag) where
# rtag authenticates (origin, sq, req) independently of the enclosing
# message, so batched requests cannot be forged or replayed across slots.
ReqTriple = tuple[int, bytes, bytes]


def request_tag(keyring: KeyRing, origin: int, sq: int, req: bytes) -> bytes:
    return keyring.tag(origin, b"REQ" + wire.u64(sq) + wire.lp(req))


def check_request_tag(keyring: KeyRing, sq: int, triple: ReqTriple) -> bool:
    origin, req, rtag = triple
    return keyring.check(origin, b"REQ" + wire.u64(sq) + wire.lp(req), rtag)


def _pack_triples(triples) -> bytes:
    out = [wire.u32(len(triples))]
    for origin, req, rtag in triples:
        out.append(wire.u32(origin) + wire.lp(req) + wire.lp(rtag))
    return b"".join(out)


def batch_digest(batch: tuple[ReqTriple, ...]) -> bytes:
    return hashlib.sha256(_pack_triples(batch)).digest()


def aggregate(proposals: dict[int, tuple[ReqTriple, ...]], f: int) -> tuple[ReqTriple, ...]:
    """Merge initial proposals: keep requests appearing in more than f of
    them, in canonical order (origin id, then request bytes)."""
    counts: dict[ReqTriple, int] = defaultdict(int)
    for prop in proposals.values():
        for triple in set(prop):
            counts[triple] += 1
    kept = [t for t, c in counts.items() if c > f]
    kept.sort(key=lambda t: (t[0], t[1]))
    return tuple(kept)


@dataclass(frozen=True)
class Message:
    kind: MsgKind
    view: int
    sq: int
    sender: int
    payload: tuple
    tag: bytes = b""

    def body_bytes(self) -> bytes:
        return (
            wire.u8(int(self.kind))
            + wire.u64(self.view)
            + wire.u64(self.sq)
            + wire.u32(self.sender)
            + wire.lp(encode_payload(self.kind, self.payload))
        )

    def to_bytes(self) -> bytes:
        return self.body_bytes() + self.tag


def encode_payload(kind: MsgKind, payload: tuple) -> bytes:
    if kind == MsgKind.REQUEST:
        req, rtag = payload
        return wire.lp(req) + wire.lp(rtag)
    if kind == MsgKind.PRE_PROPOSE:
        return _pack_triples(payload)
    if kind == MsgKind.PRE_PREPARE:
        form, digest, body = payload
        if form == "raw":
            parts = [b"R", wire.lp(digest), wire.u32(len(body))]
            for proposer, prop in body:
                parts.append(wire.u32(proposer) + _pack_triples(prop))
            return b"".join(parts)
        # certificate-backed reissue from a new view: carries the batch itself
        return b"C" + wire.lp(digest) + _pack_triples(body)
    if kind in (MsgKind.PREPARE, MsgKind.COMMIT):
        (digest,) = payload
        return wire.lp(digest)
    if kind == MsgKind.VIEW_CHANGE:
        target, certs = payload
        parts = [wire.u64(target), wire.u32(len(certs))]
        for sq, view, digest, batch, prepares in certs:
            parts.append(wire.u64(sq) + wire.u64(view) + wire.lp(digest))
            parts.append(_pack_triples(batch))
            parts.append(wire.pack_blobs([m.to_bytes() for m in prepares]))
        return b"".join(parts)
    if kind == MsgKind.NEW_VIEW:
        vcs, reissues = payload
        return wire.pack_blobs([m.to_bytes() for m in vcs]) + wire.pack_blobs(
            [m.to_bytes() for m in reissues]
        )
    raise ValueError(f"unknown kind {kind}")


@dataclass
class SlotViewState:
    accepted_digest: Optional[bytes] = None
    batch: Optional[tuple[ReqTriple, ...]] = None
    prepares: dict = dc_field(default_factory=lambda: defaultdict(dict))
    commits: dict = dc_field(default_factory=lambda: defaultdict(dict))
    prepared: bool = False
    prepare_cert: tuple = ()
    commit_sent: bool = False


@dataclass
class SlotState:
    views: dict = dc_field(default_factory=dict)  # view -> SlotViewState
    committed: bool = False
    committed_digest: Optional[bytes] = None
    committed_view: Optional[int] = None
    committed_batch: Optional[tuple[ReqTriple, ...]] = None
    executed: bool = False
    deferred: Optional[tuple[int, bytes]] = None  # commits reached quorum, batch unknown
    vc_round: int = 0
    timer_running: bool = False
    proposal_view: Optional[int] = None  # view in which we sent our pre-propose
    emitted_view: Optional[int] = None  # view in which we (as primary) pre-prepared
    last_proposal: Optional[tuple] = None  # most recent proposal we formed

    def at(self, view: int) -> SlotViewState:
        if view not in self.views:
            self.views[view] = SlotViewState()
        return self.views[view]


class Replica:
    """One consensus participant.  Drive it with on_message / on_timer and
    collect outputs with drain()."""

    def __init__(
        self,
        rid: int,
        n: int,
        f: int,
        keyring: KeyRing,
        delta: int = 1,
        batch_size: Optional[int] = None,
        app=None,
    ):
        if n != 3 * f + 1:
            raise ValueError("requires n = 3f + 1")
        self.rid = rid
        self.n = n
        self.f = f
        self.keyring = keyring
        self.delta = max(1, delta)
        self.batch_size = batch_size if batch_size is not None else 2 * f + 1
        self.app = app

        self.view = 0
        self.slots: dict[int, SlotState] = {}
        self.pending: dict[int, dict[int, ReqTriple]] = defaultdict(dict)
        self.initial_proposals: dict[int, dict[int, tuple[ReqTriple, ...]]] = defaultdict(dict)
        self.own_requests: dict[int, bytes] = {}
        self.view_changes: dict[int, dict[int, Message]] = defaultdict(dict)
        self.vc_voted = 0  # highest view we have voted to change into
        self.next_exec = 0
        self.delivered: set[tuple[int, int]] = set()  # (sq, origin) executed
        self.future: list[Message] = []
        self.dropped_count = 0

        self._out: list[tuple[int, Message]] = []
        self._timer_ops: list[tuple] = []
        self.commit_listener = None  # fn(rid, sq, view, digest)

    # -- plumbing ---------------------------------------------------------

    def drain(self):
        out, self._out = self._out, []
        timers, self._timer_ops = self._timer_ops, []
        return out, timers

    def _make(self, kind: MsgKind, sq: int, payload: tuple, view: Optional[int] = None) -> Message:
        v = self.view if view is None else view
        m = Message(kind=kind, view=v, sq=sq, sender=self.rid, payload=payload)
        return Message(kind=kind, view=v, sq=sq, sender=self.rid, payload=payload,
                       tag=self.keyring.tag(self.rid, m.body_bytes()))

    def _broadcast(self, m: Message):
        for dst in range(self.n):
            self._out.append((dst, m))

    def _send(self, dst: int, m: Message):
        self._out.append((dst, m))

    def _set_timer(self, name, delay: int):
        self._timer_ops.append(("set", name, delay))

    def _cancel_timer(self, name):
        self._timer_ops.append(("cancel", name))

    def _slot(self, sq: int) -> SlotState:
        if sq not in self.slots:
            self.slots[sq] = SlotState()
        return self.slots[sq]

    def primary(self, view: Optional[int] = None) -> int:
        return (self.view if view is None else view) % self.n

    # -- client surface -----------------------------------------------------

    def broadcast_update(self, sq: int, req: bytes):
        """Submit a request into a slot; fan out to every participant."""
        if sq < 0:
            raise ValueError("sequence number must be non-negative")
        self.own_requests[sq] = req
        rtag = request_tag(self.keyring, self.rid, sq, req)
        self._broadcast(self._make(MsgKind.REQUEST, sq, (req, rtag)))
        self._start_progress_timer(sq)

    # -- event entry points --------------------------------------------------

    def on_message(self, m: Message, now: int = 0):
        if not self.keyring.check(m.sender, m.body_bytes(), m.tag):
            self.dropped_count += 1
            return
        if m.kind == MsgKind.VIEW_CHANGE:
            self._on_view_change(m)
            return
        if m.kind == MsgKind.NEW_VIEW:
            self._on_new_view(m)
            return
        if m.view < self.view:
            self.dropped_count += 1
            return
        if m.view > self.view:
            self.future.append(m)
            return
        handler = {
            MsgKind.REQUEST: self._on_request,
            MsgKind.PRE_PROPOSE: self._on_pre_propose,
            MsgKind.PRE_PREPARE: self._on_pre_prepare,
            MsgKind.PREPARE: self._on_prepare,
            MsgKind.COMMIT: self._on_commit,
        }[m.kind]
        handler(m)

    def on_timer(self, name, now: int = 0):
        kind = name[0]
        if kind == "batch":
            self._form_proposal(name[1])
        elif kind == "prop":
            self._emit_pre_prepare(name[1])
        elif kind == "slot":
            self._on_progress_timeout(name[1])
        elif kind == "vc":
            target = name[1]
            if self.view < target:
                self._start_view_change(target + 1)

    # -- request batching ------------------------------------------------

    def _on_request(self, m: Message):
        sq = m.sq
        slot = self._slot(sq)
        if slot.committed:
            return
        req, rtag = m.payload
        triple = (m.sender, req, rtag)
        if not check_request_tag(self.keyring, sq, triple):
            self.dropped_count += 1
            return
        self.pending[sq][m.sender] = triple  # latest request per sender wins
        self._start_progress_timer(sq)
        if slot.proposal_view == self.view:
            return  # already pre-proposed this slot in this view
        if len(self.pending[sq]) >= min(self.batch_size, self.n):
            if len(self.pending[sq]) >= self.n:
                self._form_proposal(sq)
            else:
                # brief grace period so near-simultaneous requests all make it
                self._set_timer(("batch", sq), 2 * self.delta)

    def _form_proposal(self, sq: int):
        slot = self._slot(sq)
        if slot.committed or slot.proposal_view == self.view:
            return
        if len(self.pending[sq]) < min(self.batch_size, self.n):
            return
        proposal = tuple(sorted(self.pending[sq].values(), key=lambda t: (t[0], t[1])))
        self.pending[sq] = {}
        slot.proposal_view = self.view
        slot.last_proposal = proposal
        self._cancel_timer(("batch", sq))
        self._restart_progress_timer(sq)
        self._send(self.primary(), self._make(MsgKind.PRE_PROPOSE, sq, proposal))

    # -- primary aggregation ------------------------------------------------

    def _on_pre_propose(self, m: Message):
        sq = m.sq
        slot = self._slot(sq)
        if slot.committed or slot.emitted_view == self.view:
            return
        proposal = tuple(m.payload)
        if not all(check_request_tag(self.keyring, sq, t) for t in proposal):
            self.dropped_count += 1
            return
        self.initial_proposals[sq][m.sender] = proposal
        if self.primary() != self.rid:
            return
        if len(self.initial_proposals[sq]) > 2 * self.f:
            if len(self.initial_proposals[sq]) >= self.n:
                self._emit_pre_prepare(sq)
            else:
                self._set_timer(("prop", sq), 2 * self.delta)

    def _emit_pre_prepare(self, sq: int):
        slot = self._slot(sq)
        if slot.committed or slot.emitted_view == self.view or self.primary() != self.rid:
            return
        if slot.at(self.view).accepted_digest is not None:
            return  # a certificate-backed digest already occupies this slot
        props = self.initial_proposals[sq]
        if len(props) <= 2 * self.f:
            return
        raw = tuple(sorted(props.items()))
        batch = aggregate(dict(raw), self.f)
        digest = batch_digest(batch)
        slot.emitted_view = self.view
        self.initial_proposals[sq] = {}
        self._cancel_timer(("prop", sq))
        self._broadcast(self._make(MsgKind.PRE_PREPARE, sq, ("raw", digest, raw)))

    # -- three-phase agreement ---------------------------------------------

    def _on_pre_prepare(self, m: Message):
        if m.sender != self.primary(m.view):
            self.dropped_count += 1
            return
        form, digest, body = m.payload
        if form != "raw":
            # certificate-backed reissues are only trusted inside a validated
            # NEW_VIEW, never straight off the wire
            self.dropped_count += 1
            return
        slot = self._slot(m.sq)
        sv = slot.at(m.view)
        if sv.accepted_digest is not None:
            return  # single acceptance per (view, sq)
        raw = dict(body)
        for prop in raw.values():
            if not all(check_request_tag(self.keyring, m.sq, t) for t in prop):
                self.dropped_count += 1
                return
        if len(raw) <= 2 * self.f:
            self.dropped_count += 1
            return
        recomputed = aggregate(raw, self.f)
        if batch_digest(recomputed) != digest:
            self.dropped_count += 1
            return
        self._accept_digest(m.sq, m.view, digest, recomputed)

    def _accept_digest(self, sq: int, view: int, digest: bytes, batch):
        slot = self._slot(sq)
        sv = slot.at(view)
        sv.accepted_digest = digest
        sv.batch = batch
        self._restart_progress_timer(sq)
        self._broadcast(self._make(MsgKind.PREPARE, sq, (digest,), view=view))
        if slot.deferred is not None and slot.deferred == (view, digest):
            self._commit_local(sq, view, digest, batch)

    def _on_prepare(self, m: Message):
        (digest,) = m.payload
        slot = self._slot(m.sq)
        sv = slot.at(m.view)
        sv.prepares[digest][m.sender] = m
        if len(sv.prepares[digest]) >= 2 * self.f + 1 and not sv.prepared:
            if sv.accepted_digest is not None and sv.accepted_digest != digest:
                return  # votes for a digest we did not accept; never mix
            sv.prepared = True
            sv.prepare_cert = tuple(sorted(sv.prepares[digest].values(), key=lambda x: x.sender))
            if not sv.commit_sent:
                sv.commit_sent = True
                self._broadcast(self._make(MsgKind.COMMIT, m.sq, (digest,), view=m.view))

    def _on_commit(self, m: Message):
        (digest,) = m.payload
        slot = self._slot(m.sq)
        if slot.committed:
            return
        sv = slot.at(m.view)
        sv.commits[digest][m.sender] = m
        count = len(sv.commits[digest])
        if count >= self.f + 1 and not sv.commit_sent:
            # amplification: join the commit wave even before prepared
            sv.commit_sent = True
            self._broadcast(self._make(MsgKind.COMMIT, m.sq, (digest,), view=m.view))
        if count >= 2 * self.f + 1:
            if sv.batch is not None and sv.accepted_digest == digest:
                self._commit_local(m.sq, m.view, digest, sv.batch)
            else:
                # quorum reached before we saw the batch; execute on arrival
                slot.deferred = (m.view, digest)

    def _commit_local(self, sq: int, view: int, digest: bytes, batch):
        slot = self._slot(sq)
        if slot.committed:
            return
        slot.committed = True
        slot.committed_digest = digest
        slot.committed_view = view
        slot.committed_batch = batch
        slot.deferred = None
        if self.commit_listener is not None:
            self.commit_listener(self.rid, sq, view, digest)
        if slot.timer_running:
            self._cancel_timer(("slot", sq))
            slot.timer_running = False
        self.pending.pop(sq, None)
        self.initial_proposals.pop(sq, None)
        self.own_requests.pop(sq, None)
        self._drain_executions()

    def _drain_executions(self):
        while True:
            slot = self.slots.get(self.next_exec)
            if slot is None or not slot.committed or slot.executed:
                return
            slot.executed = True
            batch = slot.committed_batch
            sq = self.next_exec
            self.next_exec += 1
            if self.app is not None:
                for origin, req, _rtag in batch:
                    key = (sq, origin)
                    if key in self.delivered:
                        continue
                    self.delivered.add(key)
                    self.app.receiving_update(sq, origin, req)
                self.app.on_slot_committed(sq, batch)
            # per-slot stores already dropped in _commit_local; view records
            # are kept only for prepared certificates, which are now moot
            slot.views = {}

    # -- timers and view change ----------------------------------------------

    def _start_progress_timer(self, sq: int):
        slot = self._slot(sq)
        if slot.committed or slot.timer_running:
            return
        slot.timer_running = True
        self._set_timer(("slot", sq), 6 * self.delta * (1 << slot.vc_round))

    def _restart_progress_timer(self, sq: int):
        """Visible progress on the slot: push the timeout out."""
        slot = self._slot(sq)
        if slot.timer_running:
            self._cancel_timer(("slot", sq))
            slot.timer_running = False
        self._start_progress_timer(sq)

    def _on_progress_timeout(self, sq: int):
        slot = self._slot(sq)
        slot.timer_running = False
        if slot.committed:
            return
        slot.vc_round += 1
        self._start_view_change(self.view + 1)

    def _prepared_certs(self):
        certs = []
        for sq, slot in sorted(self.slots.items()):
            if slot.committed:
                continue
            best = None
            for view, sv in slot.views.items():
                if sv.prepared and (best is None or view > best[0]):
                    best = (view, sv)
            if best is not None:
                view, sv = best
                certs.append((sq, view, sv.accepted_digest, sv.batch, sv.prepare_cert))
        return tuple(certs)

    def _start_view_change(self, target: int):
        if target <= self.view or target <= self.vc_voted:
            return
        self.vc_voted = target
        m = self._make(MsgKind.VIEW_CHANGE, 0, (target, self._prepared_certs()), view=self.view)
        self._broadcast(m)
        self._set_timer(("vc", target), 6 * self.delta * (1 << max(0, target - self.view)))

    def _check_cert(self, cert) -> bool:
        sq, view, digest, batch, prepares = cert
        if batch_digest(tuple(batch)) != digest:
            return False
        senders = set()
        for pm in prepares:
            if pm.kind != MsgKind.PREPARE or pm.view != view or pm.sq != sq:
                return False
            if pm.payload != (digest,):
                return False
            if not self.keyring.check(pm.sender, pm.body_bytes(), pm.tag):
                return False
            senders.add(pm.sender)
        return len(senders) >= 2 * self.f + 1

    def _check_view_change(self, m: Message) -> bool:
        target, certs = m.payload
        return all(self._check_cert(c) for c in certs)

    def _on_view_change(self, m: Message):
        target, certs = m.payload
        if target <= self.view:
            return
        if not self._check_view_change(m):
            self.dropped_count += 1
            return
        self.view_changes[target][m.sender] = m
        votes = self.view_changes[target]
        if len(votes) >= self.f + 1 and target > self.vc_voted:
            self._start_view_change(target)  # join: enough suspicion around
        if self.primary(target) == self.rid and len(votes) >= 2 * self.f + 1 and self.view < target:
            self._emit_new_view(target)

    def _best_certs(self, vcs) -> dict[int, tuple]:
        best: dict[int, tuple] = {}
        for vc in vcs:
            _, certs = vc.payload
            for cert in certs:
                sq, view = cert[0], cert[1]
                if sq not in best or view > best[sq][1]:
                    best[sq] = cert
        return best

    def _emit_new_view(self, target: int):
        votes = self.view_changes[target]
        vcs = tuple(votes[s] for s in sorted(votes))[: 2 * self.f + 1]
        reissues = []
        for sq, cert in sorted(self._best_certs(vcs).items()):
            _, _, digest, batch, _ = cert
            reissues.append(
                self._make(MsgKind.PRE_PREPARE, sq, ("cert", digest, tuple(batch)), view=target)
            )
        nv = self._make(MsgKind.NEW_VIEW, 0, (vcs, tuple(reissues)), view=target)
        self._broadcast(nv)
        self._enter_view(target)
        for r in reissues:
            _, digest, batch = r.payload
            self._accept_digest(r.sq, target, digest, tuple(batch))

    def _on_new_view(self, m: Message):
        target = m.view
        if target <= self.view or m.sender != self.primary(target):
            return
        vcs, reissues = m.payload
        senders = set()
        for vc in vcs:
            if vc.kind != MsgKind.VIEW_CHANGE or vc.payload[0] != target:
                break
            if not self.keyring.check(vc.sender, vc.body_bytes(), vc.tag):
                break
            if not self._check_view_change(vc):
                break
            senders.add(vc.sender)
        else:
            if len(senders) >= 2 * self.f + 1:
                required = self._best_certs(vcs)
                reissue_map = {}
                ok = True
                for r in reissues:
                    if (
                        r.kind != MsgKind.PRE_PREPARE
                        or r.view != target
                        or r.sender != self.primary(target)
                        or r.payload[0] != "cert"
                        or not self.keyring.check(r.sender, r.body_bytes(), r.tag)
                    ):
                        ok = False
                        break
                    _, digest, batch = r.payload
                    if batch_digest(tuple(batch)) != digest:
                        ok = False
                        break
                    reissue_map[r.sq] = (digest, tuple(batch))
                if ok:
                    for sq, cert in required.items():
                        if sq in reissue_map and reissue_map[sq][0] == cert[2]:
                            continue
                        slot = self.slots.get(sq)
                        if slot is not None and slot.committed:
                            continue  # already settled locally; nothing owed
                        ok = False
                        break
                if ok:
                    self._enter_view(target)
                    for r in reissues:
                        _, digest, batch = r.payload
                        slot = self._slot(r.sq)
                        if not slot.committed:
                            self._accept_digest(r.sq, target, digest, tuple(batch))
                    return
        # anything off about this NEW_VIEW: push for the next view instead
        self._start_view_change(target + 1)

    def _enter_view(self, target: int):
        self.view = target
        self.vc_voted = max(self.vc_voted, target)
        self._cancel_timer(("vc", target))
        for sq, slot in self.slots.items():
            if slot.committed:
                continue
            self.initial_proposals.pop(sq, None)
            self._cancel_timer(("batch", sq))
            self._cancel_timer(("prop", sq))
            if slot.timer_running:
                self._cancel_timer(("slot", sq))
                slot.timer_running = False
            self._start_progress_timer(sq)
        # re-propose what we already batched, so the new primary does not
        # have to wait out a full round of request rebroadcasts
        for sq, slot in sorted(self.slots.items()):
            if slot.committed or slot.last_proposal is None:
                continue
            combined = {t[0]: t for t in slot.last_proposal}
            combined.update(self.pending.get(sq, {}))
            proposal = tuple(sorted(combined.values(), key=lambda t: (t[0], t[1])))
            slot.last_proposal = proposal
            slot.proposal_view = self.view
            self._send(self.primary(), self._make(MsgKind.PRE_PROPOSE, sq, proposal))
        # our own uncommitted requests go out again under the new view
        for sq, req in sorted(self.own_requests.items()):
            rtag = request_tag(self.keyring, self.rid, sq, req)
            self._broadcast(self._make(MsgKind.REQUEST, sq, (req, rtag)))
        buffered, self.future = self.future, []
        for bm in buffered:
            if bm.view >= self.view:
                self.on_message(bm)
