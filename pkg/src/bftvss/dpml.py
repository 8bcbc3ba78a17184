"""Distributed training workflows over the toy task.

Three engines share the same data, initialization, and local-update rule:

* fedavg-plain: plain parameter averaging, no sharing, no adversary.
* baseline-vss: every participant deals its updated parameters through
  verifiable secret sharing with plaintext point-to-point shares and
  independent verification; aggregation is not consensus-gated.  With
  "+acumpa" a malicious dealer delays its submission, reconstructs the
  honest average from eavesdropped shares, and submits a crafted vector.
* ebyftves: the defended workflow.  Each round occupies three consensus
  slots: encrypted shares plus commitments, then bundled verification votes,
  then aggregated sum shares.  The commit deadline of the share slot closes
  the observation window the baseline attacker depends on.

Division by the dealer count happens after reconstruction, in the real
domain; the field only ever sees sums.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import training, vss, wire
from .attack import AcumpaAttacker, AsdpParams
from .consensus import MsgKind, Replica
from .crypto import DecryptionError, KeyRing, make_scheme
from .field import FixedPointCodec, GroupParams, generate_group
from .netsim import AdversaryPolicy, SimConfig, Simulator, Trace

MODES = (
    "fedavg-plain",
    "baseline-vss",
    "baseline-vss+acumpa",
    "ebyftves",
    "ebyftves+acumpa",
)

RESULT_SCHEMA_VERSION = 1


class WorkflowError(Exception):
    """A training run could not complete (stalled slot, empty dealer set,
    diverging replicas)."""


@dataclass(frozen=True)
class TrainingConfig:
    n: int = 4
    f: int = 1
    th: int = 3
    rounds: int = 30
    error_threshold: float = 0.05
    learning_rate: float = 0.1
    dim: int = 16
    samples: int = 400
    test_samples: int = 1000
    flip_rate: float = 0.02
    mode: str = "fedavg-plain"
    attackers: tuple[int, ...] = ()
    theta_cos: float = 0.8
    tau: float = 0.90
    fraction_bits: int = 16
    bits_p: int = 96
    bits_q: int = 48
    seed: int = 0
    asdp_delta: float = 1.0
    fallback: str = "stale-or-random"
    encryption: str = "hybrid"
    gst: int = 0
    delta: int = 1

    def validate(self) -> None:
        if self.n != 3 * self.f + 1:
            raise ValueError("requires n = 3f + 1")
        if not 1 <= self.th <= self.n:
            raise ValueError("threshold must satisfy 1 <= th <= n")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not set(self.attackers) <= set(range(self.n)):
            raise ValueError("attacker ids must be participant ids")
        if len(self.attackers) > self.f:
            raise ValueError(f"at most f={self.f} attackers allowed")
        attacked = self.mode.endswith("+acumpa")
        if attacked and not self.attackers:
            raise ValueError("attack mode needs a non-empty attacker set")
        if not attacked and self.attackers:
            raise ValueError(f"mode {self.mode!r} does not take attackers")
        if self.rounds < 1:
            raise ValueError("rounds must be positive")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")


@dataclass(frozen=True)
class RoundMetrics:
    t: int
    accuracy: float
    train_error: float
    dealer_count: int
    adaptive_engaged: bool
    fallback_engaged: bool


def compute_inference_time(accuracies, tau: float) -> float:
    """First (1-indexed) round with accuracy >= tau; inf if never reached."""
    for t, acc in enumerate(accuracies, start=1):
        if acc >= tau:
            return float(t)
    return math.inf


@dataclass
class RunResult:
    config: TrainingConfig
    metrics: list[RoundMetrics]
    weights_history: list[np.ndarray]
    adaptive_rounds: list[int]
    fallback_rounds: list[int]
    stopped_early: bool
    trace: Optional[Trace] = None

    @property
    def accuracy_series(self) -> list[float]:
        return [m.accuracy for m in self.metrics]

    @property
    def it(self) -> float:
        return compute_inference_time(self.accuracy_series, self.config.tau)

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].accuracy

    def to_dict(self) -> dict:
        it = self.it
        return {
            "schema_version": RESULT_SCHEMA_VERSION,
            "mode": self.config.mode,
            "seed": self.config.seed,
            "config": asdict(self.config),
            "rounds": [asdict(m) for m in self.metrics],
            "accuracy": self.accuracy_series,
            "it": None if math.isinf(it) else int(it),
            "final_accuracy": self.final_accuracy,
            "adaptive_rounds": list(self.adaptive_rounds),
            "fallback_rounds": list(self.fallback_rounds),
            "stopped_early": self.stopped_early,
        }


# -- shared setup ------------------------------------------------------------


def _task(config: TrainingConfig):
    base = config.seed * 7919
    w_true = training.make_true_weights(config.dim, base + 1)
    datasets = [
        training.make_dataset(config.dim, config.samples, w_true,
                              base + 100 + i, config.flip_rate)
        for i in range(config.n)
    ]
    test = training.make_dataset(config.dim, config.test_samples, w_true,
                                 base + 99, config.flip_rate)
    w0 = training.initial_weights(config.dim, base + 2)
    return datasets, test, w0


def _round_metrics(t, w, datasets, test, dealer_count, adaptive, fallback) -> RoundMetrics:
    acc = training.accuracy(w, test)
    err = float(np.mean([training.loss(w, d) for d in datasets]))
    return RoundMetrics(t=t, accuracy=acc, train_error=err, dealer_count=dealer_count,
                        adaptive_engaged=adaptive, fallback_engaged=fallback)


def _make_attacker(config: TrainingConfig, pid: int, group: GroupParams,
                   codec: FixedPointCodec) -> AcumpaAttacker:
    params = AsdpParams(theta_cos=config.theta_cos, delta=config.asdp_delta)
    return AcumpaAttacker(pid, params, config.th, group, codec,
                          seed=config.seed * 100003 + 500 + pid,
                          fallback=config.fallback)


# -- engine: plain federated averaging ---------------------------------------


def run_plain(config: TrainingConfig) -> RunResult:
    datasets, test, w = _task(config)
    metrics: list[RoundMetrics] = []
    history: list[np.ndarray] = []
    stopped = False
    for t in range(1, config.rounds + 1):
        updates = [training.local_train(w, datasets[i], config.learning_rate)
                   for i in range(config.n)]
        w = np.mean(updates, axis=0)
        m = _round_metrics(t, w, datasets, test, config.n, False, False)
        metrics.append(m)
        history.append(w.copy())
        if m.train_error <= config.error_threshold:
            stopped = True
            break
    return RunResult(config=config, metrics=metrics, weights_history=history,
                     adaptive_rounds=[], fallback_rounds=[], stopped_early=stopped)


# -- engine: share-based baseline ---------------------------------------------


def run_baseline(config: TrainingConfig) -> RunResult:
    datasets, test, w = _task(config)
    group = generate_group(config.bits_p, config.bits_q, config.seed)
    codec = FixedPointCodec(config.fraction_bits, group.q)
    share_rng = random.Random(config.seed * 100003 + 7)
    attackers = {
        pid: _make_attacker(config, pid, group, codec)
        for pid in (config.attackers if config.mode.endswith("+acumpa") else ())
    }
    metrics: list[RoundMetrics] = []
    history: list[np.ndarray] = []
    stopped = False
    for t in range(1, config.rounds + 1):
        updates = [training.local_train(w, datasets[i], config.learning_rate)
                   for i in range(config.n)]
        all_bundles: dict[int, list[vss.ShareBundle]] = {}
        all_commits: dict[int, vss.CommitmentVector] = {}
        for i in range(config.n):
            if i in attackers:
                continue
            bundles, commits = vss.share(updates[i], config.th, config.n,
                                         group, codec, share_rng, dealer=i)
            all_bundles[i] = bundles
            all_commits[i] = commits
        # shares travel in plaintext over point-to-point channels; a delaying
        # dealer sees all of them before it has to submit anything
        observed = {d: list(bs) for d, bs in all_bundles.items()}
        round_adaptive = False
        round_fallback = False
        for pid in sorted(attackers):
            vec, engaged = attackers[pid].craft_submission(t, observed, updates[pid])
            bundles, commits = vss.share(vec, config.th, config.n,
                                         group, codec, share_rng, dealer=pid)
            all_bundles[pid] = bundles
            all_commits[pid] = commits
            round_adaptive = round_adaptive or engaged
            round_fallback = round_fallback or not engaged
        votes = {
            d: sum(vss.verify(b, all_commits[d], group) for b in bundles)
            for d, bundles in all_bundles.items()
        }
        accepted = sorted(d for d, v in votes.items() if v >= config.n - config.f)
        if not accepted:
            raise WorkflowError(f"round {t}: no dealer cleared verification")
        summed = [
            vss.sum_shares([all_bundles[d][j] for d in accepted], group)
            for j in range(config.n)
        ]
        total = vss.reconstruct(summed, config.th, group, codec)
        w = np.asarray(total) / len(accepted)
        m = _round_metrics(t, w, datasets, test, len(accepted),
                           round_adaptive, round_fallback)
        metrics.append(m)
        history.append(w.copy())
        if m.train_error <= config.error_threshold:
            stopped = True
            break
    adaptive = sorted({t for a in attackers.values() for t in a.adaptive_rounds})
    fallback = sorted({t for a in attackers.values() for t in a.fallback_rounds})
    return RunResult(config=config, metrics=metrics, weights_history=history,
                     adaptive_rounds=adaptive, fallback_rounds=fallback,
                     stopped_early=stopped)


# -- engine: defended consensus-gated workflow --------------------------------


def encode_share_request(dealer: int, ciphertexts, commitments) -> bytes:
    return (b"S" + wire.u32(dealer) + wire.pack_blobs(ciphertexts)
            + wire.lp(commitments.to_bytes()))


def decode_share_request(req: bytes):
    r = wire.Reader(req)
    if r.take(1) != b"S":
        raise ValueError("not a share request")
    dealer = r.u32()
    ciphertexts = r.blobs()
    commitments = vss.parse_commitments(r.lp())
    r.expect_end()
    return dealer, ciphertexts, commitments


def encode_vote_request(voter: int, verified) -> bytes:
    out = [b"V", wire.u32(voter), wire.u32(len(verified))]
    out.extend(wire.u32(d) for d in sorted(verified))
    return b"".join(out)


def decode_vote_request(req: bytes):
    r = wire.Reader(req)
    if r.take(1) != b"V":
        raise ValueError("not a vote request")
    voter = r.u32()
    count = r.u32()
    verified = [r.u32() for _ in range(count)]
    r.expect_end()
    return voter, verified


def encode_agg_request(sender: int, bundle: vss.ShareBundle) -> bytes:
    return b"A" + wire.u32(sender) + wire.lp(bundle.to_bytes())


def decode_agg_request(req: bytes):
    r = wire.Reader(req)
    if r.take(1) != b"A":
        raise ValueError("not an aggregated-share request")
    sender = r.u32()
    bundle = vss.parse_bundle(r.lp())
    r.expect_end()
    return sender, bundle


class _Coordinator:
    """Experiment harness shared by all simulated participants: computes
    metrics once per round, checks that everyone arrived at bit-identical
    weights, and makes the (global, deterministic) continue/stop call."""

    def __init__(self, config: TrainingConfig, datasets, test):
        self.config = config
        self.datasets = datasets
        self.test = test
        self.metrics: list[RoundMetrics] = []
        self.weights_history: list[np.ndarray] = []
        self._decisions: dict[int, bool] = {}
        self._weight_bytes: dict[int, bytes] = {}

    def round_complete(self, pid: int, t: int, w: np.ndarray, dealer_count: int) -> bool:
        key = w.tobytes()
        if t in self._decisions:
            if key != self._weight_bytes[t]:
                raise WorkflowError(
                    f"round {t}: participant {pid} reconstructed divergent weights")
            return self._decisions[t]
        self._weight_bytes[t] = key
        m = _round_metrics(t, w, self.datasets, self.test, dealer_count, False, False)
        self.metrics.append(m)
        self.weights_history.append(w.copy())
        go = m.train_error > self.config.error_threshold and t < self.config.rounds
        self._decisions[t] = go
        return go


class WorkflowParticipant:
    """Application state of one defended-mode participant.

    Round t (1-indexed) occupies slots 3(t-1)..3(t-1)+2: encrypted shares
    with commitments, then one bundled verification-vote request per
    participant, then aggregated sum shares.  All round state is fed by
    receiving_update, so it is scoped to committed batches by construction.
    """

    def __init__(self, pid, config, group, codec, scheme, secret_key,
                 publics, dataset, coordinator, w0, attacker=None):
        self.pid = pid
        self.config = config
        self.group = group
        self.codec = codec
        self.scheme = scheme
        self.secret_key = secret_key
        self.publics = publics
        self.dataset = dataset
        self.coordinator = coordinator
        self.attacker = attacker
        self.attacker_node = None
        self.replica: Optional[Replica] = None
        self.eval_point = pid + 1
        self.rng = random.Random(config.seed * 100003 + 900 + pid)
        self.w = np.array(w0, dtype=float)
        self.t = 0
        self.update: Optional[np.ndarray] = None
        self.done = False
        self.failed: Optional[str] = None
        self._commits: dict[int, vss.CommitmentVector] = {}
        self._own_shares: dict[int, vss.ShareBundle] = {}
        self._verified: set[int] = set()
        self._votes: dict[int, set[int]] = defaultdict(set)
        self._agg: dict[int, vss.ShareBundle] = {}
        self._dealer_set: list[int] = []

    def base_slot(self) -> int:
        return 3 * (self.t - 1)

    def start_round(self, t: int):
        self.t = t
        self._commits = {}
        self._own_shares = {}
        self._verified = set()
        self._votes = defaultdict(set)
        self._agg = {}
        self._dealer_set = []
        self.update = training.local_train(self.w, self.dataset,
                                           self.config.learning_rate)
        if self.attacker is not None:
            # delayed dealer: withhold the submission, hoping to observe
            # enough shares first (the wrapper node handles any craft)
            return
        self.submit_shares(self.update)

    def submit_shares(self, vector):
        sq = self.base_slot()
        bundles, commits = vss.share(vector, self.config.th, self.config.n,
                                     self.group, self.codec, self.rng,
                                     dealer=self.pid)
        ciphertexts = [
            self.scheme.encrypt(self.publics[j], bundles[j].to_bytes(), self.rng)
            for j in range(self.config.n)
        ]
        self.replica.broadcast_update(
            sq, encode_share_request(self.pid, ciphertexts, commits))

    # -- consensus application hooks ------------------------------------

    def receiving_update(self, sq: int, origin: int, req: bytes):
        base = self.base_slot()
        if self.done or self.failed or not base <= sq <= base + 2:
            return
        try:
            if sq == base:
                dealer, ciphertexts, commits = decode_share_request(req)
                if dealer != origin or commits.dealer != dealer:
                    return
                if len(ciphertexts) != self.config.n:
                    return
                self._commits[dealer] = commits
                plain = self.scheme.decrypt(self.secret_key, ciphertexts[self.pid])
                bundle = vss.parse_bundle(plain)
                if bundle.dealer == dealer and bundle.recipient == self.eval_point:
                    self._own_shares[dealer] = bundle
            elif sq == base + 1:
                voter, verified = decode_vote_request(req)
                if voter != origin:
                    return
                for d in verified:
                    self._votes[d].add(voter)
            else:
                sender, bundle = decode_agg_request(req)
                if sender != origin or bundle.eval_point != sender + 1:
                    return
                self._agg[sender] = bundle
        except (ValueError, DecryptionError, vss.MalformedInputError):
            return  # malformed or undecryptable input from a faulty peer

    def on_slot_committed(self, sq: int, batch):
        if self.done or self.failed:
            return
        base = self.base_slot()
        if sq == base:
            self._share_slot_done(sq)
        elif sq == base + 1:
            self._vote_slot_done(sq)
        elif sq == base + 2:
            self._agg_slot_done()

    def _share_slot_done(self, sq: int):
        if self.attacker is not None:
            self._attack_deadline(sq)
        self._verified = {
            d for d, bundle in self._own_shares.items()
            if d in self._commits and vss.verify(bundle, self._commits[d], self.group)
        }
        self.replica.broadcast_update(
            sq + 1, encode_vote_request(self.pid, sorted(self._verified)))

    def _attack_deadline(self, sq: int):
        # the share slot just committed; whatever was observed until now is
        # all the attacker will ever see for this round
        node = self.attacker_node
        if node is not None and sq in node.submitted:
            return  # crafted submission already went out before the deadline
        observed = node.observed.get(sq, {}) if node is not None else {}
        self.attacker.craft_submission(self.t, observed, self.update)

    def _vote_slot_done(self, sq: int):
        dealer_set = sorted(
            d for d, voters in self._votes.items()
            if len(voters) >= self.config.th and d in self._commits
        )
        if not dealer_set:
            self.failed = f"round {self.t}: no dealer reached {self.config.th} votes"
            return
        self._dealer_set = dealer_set
        if all(d in self._verified for d in dealer_set):
            summed = vss.sum_shares([self._own_shares[d] for d in dealer_set],
                                    self.group)
            self.replica.broadcast_update(
                sq + 1, encode_agg_request(self.pid, summed))

    def _agg_slot_done(self):
        if len(self._agg) < self.config.th:
            self.failed = (f"round {self.t}: only {len(self._agg)} aggregated "
                           f"shares committed, need {self.config.th}")
            return
        total = vss.reconstruct(self._agg.values(), self.config.th,
                                self.group, self.codec)
        self.w = np.asarray(total) / len(self._dealer_set)
        go = self.coordinator.round_complete(self.pid, self.t, self.w,
                                             len(self._dealer_set))
        if go:
            self.start_round(self.t + 1)
        else:
            self.done = True


class DelayedDealerNode:
    """Wraps the attacker's replica.  It eavesdrops share requests flowing
    past, decrypts whatever its own key opens, and submits a crafted share
    request if the observations reach the reconstruction threshold for every
    observed dealer before the slot commits.  Under real encryption only its
    own shares decrypt, so that never happens; it keeps waiting, the batch
    forms without it, and its (recorded) fallback comes too late to enter the
    round."""

    def __init__(self, replica: Replica, participant: WorkflowParticipant,
                 attacker: AcumpaAttacker, scheme, secret_key):
        self.replica = replica
        self.participant = participant
        self.attacker = attacker
        self.scheme = scheme
        self.secret_key = secret_key
        self.observed: dict[int, dict[int, list[vss.ShareBundle]]] = {}
        self.submitted: set[int] = set()

    def on_message(self, m, now=0):
        if (m.kind == MsgKind.REQUEST and m.sq % 3 == 0
                and m.sender != self.participant.pid):
            self._eavesdrop(m.sq, m.payload[0])
        self.replica.on_message(m, now)

    def on_timer(self, name, now=0):
        self.replica.on_timer(name, now)

    def drain(self):
        return self.replica.drain()

    def _eavesdrop(self, sq: int, req: bytes):
        try:
            dealer, ciphertexts, _ = decode_share_request(req)
        except (ValueError, vss.MalformedInputError):
            return
        store = self.observed.setdefault(sq, defaultdict(list))
        for ct in ciphertexts:
            try:
                bundle = vss.parse_bundle(self.scheme.decrypt(self.secret_key, ct))
            except (DecryptionError, ValueError, vss.MalformedInputError):
                continue
            if bundle.dealer == dealer:
                store[dealer].append(bundle)
        self._maybe_submit(sq, store)

    def _maybe_submit(self, sq: int, store):
        part = self.participant
        if sq in self.submitted or part.t == 0 or sq != part.base_slot():
            return
        slot = self.replica.slots.get(sq)
        if slot is not None and slot.committed:
            return  # deadline already passed
        if self.attacker.observed_target(store) is None:
            return  # keep waiting: more shares may still show up
        crafted, _ = self.attacker.craft_submission(part.t, store, part.update)
        self.submitted.add(sq)
        part.submit_shares(crafted)


def run_defended(config: TrainingConfig, collect_trace: bool = False) -> RunResult:
    datasets, test, w0 = _task(config)
    group = generate_group(config.bits_p, config.bits_q, config.seed)
    codec = FixedPointCodec(config.fraction_bits, group.q)
    scheme = make_scheme(config.encryption, group)
    key_rng = random.Random(config.seed * 100003 + 11)
    keypairs = [scheme.keygen(key_rng) for _ in range(config.n)]
    publics = [kp.public for kp in keypairs]
    keyring = KeyRing(range(config.n), random.Random(config.seed * 100003 + 13))
    coordinator = _Coordinator(config, datasets, test)
    attacked = config.mode.endswith("+acumpa")

    attackers: dict[int, AcumpaAttacker] = {}
    participants: dict[int, WorkflowParticipant] = {}
    nodes: dict[int, object] = {}
    for i in range(config.n):
        attacker = None
        if attacked and i in config.attackers:
            attacker = _make_attacker(config, i, group, codec)
            attackers[i] = attacker
        part = WorkflowParticipant(i, config, group, codec, scheme,
                                   keypairs[i].secret, publics, datasets[i],
                                   coordinator, w0, attacker=attacker)
        rep = Replica(i, config.n, config.f, keyring, delta=config.delta, app=part)
        part.replica = rep
        node: object = rep
        if attacker is not None:
            node = DelayedDealerNode(rep, part, attacker, scheme,
                                     keypairs[i].secret)
            part.attacker_node = node
        participants[i] = part
        nodes[i] = node

    sim_config = SimConfig(n=config.n, f=config.f, gst=config.gst,
                           delta=config.delta, seed=config.seed)
    adversary = AdversaryPolicy(corrupt=frozenset(config.attackers))
    sim = Simulator(sim_config, nodes, adversary, trace_messages=collect_trace)
    for i in range(config.n):
        participants[i].replica.commit_listener = (
            lambda rid, sq, view, digest: sim.record_commit(rid, sq, view, digest))
    for part in participants.values():
        part.start_round(1)
    sim.run()

    for part in participants.values():
        if part.failed:
            raise WorkflowError(part.failed)
    honest = next(i for i in range(config.n) if i not in attackers)
    if not participants[honest].done:
        raise WorkflowError(
            f"training stalled in round {participants[honest].t} "
            f"(simulation drained at t={sim.clock})")

    adaptive = sorted({t for a in attackers.values() for t in a.adaptive_rounds})
    fallback = sorted({t for a in attackers.values() for t in a.fallback_rounds})
    metrics = [
        replace(m, adaptive_engaged=m.t in adaptive, fallback_engaged=m.t in fallback)
        for m in coordinator.metrics
    ]
    sim.trace.flags["adaptive_rounds"] = adaptive
    sim.trace.flags["fallback_rounds"] = fallback
    stopped = bool(metrics) and metrics[-1].train_error <= config.error_threshold
    return RunResult(config=config, metrics=metrics,
                     weights_history=coordinator.weights_history,
                     adaptive_rounds=adaptive, fallback_rounds=fallback,
                     stopped_early=stopped, trace=sim.trace)


def run(config: TrainingConfig, collect_trace: bool = False) -> RunResult:
    """Run one training workflow according to config.mode."""
    config.validate()
    if config.mode == "fedavg-plain":
        return run_plain(config)
    if config.mode.startswith("baseline-vss"):
        return run_baseline(config)
    return run_defended(config, collect_trace=collect_trace)
