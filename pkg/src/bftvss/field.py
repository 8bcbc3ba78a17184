"""Modular arithmetic over a prime-order subgroup, plus the fixed-point codec.

The sharing layer works over Z_q (exponents / share values) and the
multiplicative subgroup of order q inside Z_p* (commitments).  Gradients are
real-valued, so a fixed-point codec maps them into Z_q with a two's-complement
style wraparound for negatives.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import sympy

from . import wire


class GroupGenerationError(Exception):
    """Parameter search exhausted without finding a valid (p, q, g)."""


class EncodingRangeError(Exception):
    """Real value too large for the fixed-point representation."""


# Search budgets for generate_group.  Generous: a random bits_q-bit prime q
# admits a prime p = q*m + 1 quickly by the prime number theorem.
_MAX_Q_CANDIDATES = 50_000
_MAX_P_CANDIDATES = 200_000


@dataclass(frozen=True)
class GroupParams:
    """A prime p, prime subgroup order q with q | p-1, and a generator g of
    the order-q subgroup of Z_p*."""

    p: int
    q: int
    g: int

    def validate(self) -> None:
        if not sympy.isprime(self.p):
            raise ValueError("p is not prime")
        if not sympy.isprime(self.q):
            raise ValueError("q is not prime")
        if (self.p - 1) % self.q != 0:
            raise ValueError("q does not divide p - 1")
        if not (2 <= self.g <= self.p - 1):
            raise ValueError("g out of range")
        if self.g == 1 or pow(self.g, self.q, self.p) != 1:
            raise ValueError("g does not generate an order-q subgroup")

    def to_bytes(self) -> bytes:
        """Canonical length-prefixed big-endian encoding p || q || g."""
        return wire.big(self.p) + wire.big(self.q) + wire.big(self.g)


def generate_group(bits_p: int, bits_q: int, seed: int) -> GroupParams:
    """Deterministically generate group parameters from a seed.

    Picks a random bits_q-bit prime q, searches for p = q*m + 1 prime with
    exactly bits_p bits, then derives a generator g = h^((p-1)/q) mod p.
    Small test-scale sizes (down to 4-bit q) are permitted so properties can
    be checked exhaustively.
    """
    if bits_q >= bits_p:
        raise ValueError("bits_q must be smaller than bits_p")
    if bits_q < 4:
        raise ValueError("bits_q too small")
    rng = random.Random(seed)

    q = None
    for _ in range(_MAX_Q_CANDIDATES):
        cand = rng.getrandbits(bits_q) | (1 << (bits_q - 1)) | 1
        if sympy.isprime(cand):
            q = cand
            break
    if q is None:
        raise GroupGenerationError("no prime q found within budget")

    bits_m = bits_p - bits_q
    p = None
    for _ in range(_MAX_P_CANDIDATES):
        m = rng.getrandbits(bits_m) | (1 << (bits_m - 1))
        cand = q * m + 1
        if cand.bit_length() == bits_p and sympy.isprime(cand):
            p = cand
            break
    if p is None:
        raise GroupGenerationError("no prime p = q*m + 1 found within budget")

    cofactor = (p - 1) // q
    for _ in range(_MAX_Q_CANDIDATES):
        h = rng.randrange(2, p - 1)
        g = pow(h, cofactor, p)
        if g != 1:
            params = GroupParams(p=p, q=q, g=g)
            params.validate()
            return params
    raise GroupGenerationError("no generator found within budget")


# --- Z_q field operations ------------------------------------------------

def add(a: int, b: int, q: int) -> int:
    return (a + b) % q


def sub(a: int, b: int, q: int) -> int:
    return (a - b) % q


def mul(a: int, b: int, q: int) -> int:
    return (a * b) % q


def inv(a: int, q: int) -> int:
    if a % q == 0:
        raise ZeroDivisionError("no inverse of 0 in Z_q")
    return pow(a, -1, q)


def fpow(a: int, e: int, q: int) -> int:
    return pow(a, e, q)


def group_pow(base: int, exp: int, p: int) -> int:
    """Exponentiation in Z_p* (commitment arithmetic)."""
    return pow(base, exp, p)


# --- Fixed-point codec ----------------------------------------------------

@dataclass(frozen=True)
class FixedPointCodec:
    """Maps reals into Z_q with scaling 2^fraction_bits.

    Negative values wrap to the top half of the field, so field addition of
    encodings is real addition up to rounding, which is what share
    aggregation relies on.
    """

    fraction_bits: int
    q: int

    @property
    def scale(self) -> int:
        return 1 << self.fraction_bits

    @property
    def max_abs(self) -> float:
        # |x| must stay below q / 2^(F+1) so sign disambiguation works
        return self.q / (2 * self.scale)

    def encode(self, x: float) -> int:
        if abs(x) >= self.max_abs:
            raise EncodingRangeError(f"{x!r} outside representable range")
        v = round(x * self.scale)
        return v % self.q

    def decode(self, e: int) -> float:
        e %= self.q
        if e > self.q // 2:
            e -= self.q
        return e / self.scale

    def encode_vector(self, xs) -> tuple[int, ...]:
        return tuple(self.encode(float(x)) for x in xs)

    def decode_vector(self, es) -> tuple[float, ...]:
        return tuple(self.decode(e) for e in es)
