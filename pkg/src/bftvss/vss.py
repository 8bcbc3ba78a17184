"""Feldman-style verifiable secret sharing, applied per gradient coordinate.

Each coordinate of a gradient vector is shared through its own random
polynomial of degree th-1; the dealer publishes g^{a_k} commitments for every
coefficient so recipients can check their share without learning the secret.
Shares are additively homomorphic, which the aggregation workflow exploits:
summed shares reconstruct to the sum of the dealt secrets.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import wire
from .field import FixedPointCodec, GroupParams

# Dealer id carried by bundles produced by sum_shares: the sum no longer
# belongs to a single dealer.
AGGREGATE_DEALER = 0xFFFFFFFF


class InsufficientSharesError(Exception):
    """Fewer than th usable shares were supplied to reconstruct."""


class MalformedInputError(Exception):
    """Bundles/commitments that cannot belong together (dimension, dealer,
    eval-point mismatches, duplicates)."""


@dataclass(frozen=True)
class ShareBundle:
    """One recipient's shares from one dealer: a field element per gradient
    coordinate, all evaluated at the recipient's index."""

    dealer: int
    recipient: int
    eval_point: int
    values: tuple[int, ...]

    def __post_init__(self):
        if self.eval_point != self.recipient and self.dealer != AGGREGATE_DEALER:
            raise MalformedInputError("eval_point must equal recipient index")

    @property
    def dimension(self) -> int:
        return len(self.values)

    def to_bytes(self) -> bytes:
        return (
            wire.u32(self.dealer)
            + wire.u32(self.recipient)
            + wire.u32(self.dimension)
            + wire.u32(self.eval_point)
            + wire.pack_bigs(self.values)
        )


@dataclass(frozen=True)
class CommitmentVector:
    """Per-coordinate Feldman commitments: for each coordinate, the th group
    elements g^{a_0}, ..., g^{a_{th-1}}."""

    dealer: int
    per_coordinate: tuple[tuple[int, ...], ...]

    @property
    def dimension(self) -> int:
        return len(self.per_coordinate)

    @property
    def threshold(self) -> int:
        return len(self.per_coordinate[0]) if self.per_coordinate else 0

    def to_bytes(self) -> bytes:
        out = [wire.u32(self.dealer), wire.u32(self.dimension), wire.u32(self.threshold)]
        for coord in self.per_coordinate:
            out.append(wire.pack_bigs(coord))
        return b"".join(out)


def parse_bundle(data: bytes) -> ShareBundle:
    """Inverse of ShareBundle.to_bytes; raises MalformedInputError."""
    try:
        r = wire.Reader(data)
        dealer, recipient, dim, eval_point = r.u32(), r.u32(), r.u32(), r.u32()
        values = r.bigs()
        r.expect_end()
    except ValueError as exc:
        raise MalformedInputError(str(exc)) from exc
    if len(values) != dim:
        raise MalformedInputError("value count disagrees with declared dimension")
    return ShareBundle(dealer=dealer, recipient=recipient, eval_point=eval_point, values=values)


def parse_commitments(data: bytes) -> CommitmentVector:
    """Inverse of CommitmentVector.to_bytes; raises MalformedInputError."""
    try:
        r = wire.Reader(data)
        dealer, dim, th = r.u32(), r.u32(), r.u32()
        per_coordinate = tuple(r.bigs() for _ in range(dim))
        r.expect_end()
    except ValueError as exc:
        raise MalformedInputError(str(exc)) from exc
    if any(len(coord) != th for coord in per_coordinate):
        raise MalformedInputError("commitment count disagrees with declared threshold")
    return CommitmentVector(dealer=dealer, per_coordinate=per_coordinate)


def eval_poly(coeffs: Sequence[int], x: int, q: int) -> int:
    """Evaluate a polynomial with the given coefficients (constant first) at x
    over Z_q, by Horner's rule."""
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % q
    return acc


def share_encoded(
    encoded: Sequence[int],
    th: int,
    n: int,
    params: GroupParams,
    rng: random.Random,
) -> tuple[list[ShareBundle], CommitmentVector]:
    """Share already-encoded field elements (one per coordinate).

    Returns n bundles (recipients 1..n, evaluation point = recipient index)
    and the dealer's commitment vector.  The dealer id on the outputs is 0;
    callers re-attach their own id via replace_dealer.
    """
    if not (1 <= th <= n):
        raise ValueError("threshold must satisfy 1 <= th <= n")
    q, p, g = params.q, params.p, params.g
    polys = []
    commitments = []
    for s in encoded:
        coeffs = [s % q] + [rng.randrange(q) for _ in range(th - 1)]
        polys.append(coeffs)
        commitments.append(tuple(pow(g, a, p) for a in coeffs))
    bundles = []
    for j in range(1, n + 1):
        values = tuple(eval_poly(coeffs, j, q) for coeffs in polys)
        bundles.append(ShareBundle(dealer=0, recipient=j, eval_point=j, values=values))
    return bundles, CommitmentVector(dealer=0, per_coordinate=tuple(commitments))


def share(
    secret: Sequence[float],
    th: int,
    n: int,
    params: GroupParams,
    codec: FixedPointCodec,
    rng: random.Random,
    dealer: int = 0,
) -> tuple[list[ShareBundle], CommitmentVector]:
    """Encode a real-valued secret vector and share it coordinate-wise."""
    encoded = codec.encode_vector(secret)
    bundles, commits = share_encoded(encoded, th, n, params, rng)
    bundles = [replace_dealer(b, dealer) for b in bundles]
    return bundles, CommitmentVector(dealer=dealer, per_coordinate=commits.per_coordinate)


def replace_dealer(bundle: ShareBundle, dealer: int) -> ShareBundle:
    return ShareBundle(
        dealer=dealer,
        recipient=bundle.recipient,
        eval_point=bundle.eval_point,
        values=bundle.values,
    )


def verify(bundle: ShareBundle, commitments: CommitmentVector, params: GroupParams) -> bool:
    """Check g^{s_j} == c_0 * c_1^j * c_2^{j^2} * ... per coordinate.

    Exponents j^k are reduced mod q, which is sound because the commitments
    live in a subgroup of order q.
    """
    if bundle.dealer != commitments.dealer:
        raise MalformedInputError("bundle and commitments disagree on dealer")
    if bundle.dimension != commitments.dimension:
        raise MalformedInputError("bundle and commitments disagree on dimension")
    p, q, g = params.p, params.q, params.g
    j = bundle.eval_point
    for value, coord_commits in zip(bundle.values, commitments.per_coordinate):
        lhs = pow(g, value, p)
        rhs = 1
        jk = 1  # j^k mod q
        for c in coord_commits:
            rhs = (rhs * pow(c, jk, p)) % p
            jk = (jk * j) % q
        if lhs != rhs:
            return False
    return True


def _select_bundles(bundles: Iterable[ShareBundle], th: int) -> list[ShareBundle]:
    chosen = sorted(bundles, key=lambda b: b.eval_point)
    points = [b.eval_point for b in chosen]
    if len(set(points)) != len(points):
        raise MalformedInputError("duplicate evaluation points")
    dims = {b.dimension for b in chosen}
    if len(dims) > 1:
        raise MalformedInputError("mixed dimensions")
    dealers = {b.dealer for b in chosen}
    if len(dealers) > 1:
        raise MalformedInputError("bundles from different dealers")
    if len(chosen) < th:
        raise InsufficientSharesError(f"need {th} shares, got {len(chosen)}")
    return chosen[:th]


def reconstruct_encoded(
    bundles: Iterable[ShareBundle], th: int, params: GroupParams
) -> tuple[int, ...]:
    """Lagrange interpolation at 0 over Z_q, per coordinate.

    If more than th bundles are given, the th with the lowest evaluation
    points are used, so the result is deterministic.
    """
    chosen = _select_bundles(bundles, th)
    q = params.q
    xs = [b.eval_point for b in chosen]
    # Lagrange basis coefficients at x = 0
    lambdas = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if j == i:
                continue
            num = (num * (-xj)) % q
            den = (den * (xi - xj)) % q
        lambdas.append((num * pow(den, -1, q)) % q)
    dim = chosen[0].dimension
    out = []
    for coord in range(dim):
        acc = 0
        for b, lam in zip(chosen, lambdas):
            acc = (acc + b.values[coord] * lam) % q
        out.append(acc)
    return tuple(out)


def reconstruct(
    bundles: Iterable[ShareBundle],
    th: int,
    params: GroupParams,
    codec: FixedPointCodec,
) -> tuple[float, ...]:
    """Reconstruct and decode back to the real domain."""
    return codec.decode_vector(reconstruct_encoded(bundles, th, params))


def sum_shares(bundles: Sequence[ShareBundle], params: GroupParams) -> ShareBundle:
    """Coordinate-wise field sum of one recipient's bundles from distinct
    dealers.  Reconstructing th such sums yields the sum of the secrets."""
    if not bundles:
        raise MalformedInputError("no bundles to sum")
    first = bundles[0]
    if len(bundles) == 1:
        return first
    dealers = [b.dealer for b in bundles]
    if len(set(dealers)) != len(dealers):
        raise MalformedInputError("duplicate dealers in sum")
    q = params.q
    acc = list(first.values)
    for b in bundles[1:]:
        if b.eval_point != first.eval_point:
            raise MalformedInputError("eval_point mismatch in sum")
        if b.dimension != first.dimension:
            raise MalformedInputError("dimension mismatch in sum")
        for i, v in enumerate(b.values):
            acc[i] = (acc[i] + v) % q
    return ShareBundle(
        dealer=AGGREGATE_DEALER,
        recipient=first.recipient,
        eval_point=first.eval_point,
        values=tuple(acc),
    )
