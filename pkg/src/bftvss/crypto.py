"""Simulator-grade authentication and encryption.

Message authentication uses per-sender secret tags managed by a registry the
simulator owns: inside a simulation nobody can forge another sender's tag,
which models authenticated point-to-point channels.  Share transport uses a
pluggable public-key scheme; the default is a test-grade hybrid construction
over the same discrete-log group as the commitments.  None of this is meant
to resist side channels or real-world adversaries.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from . import wire
from .field import GroupParams

TAG_LEN = 32


class KeyRing:
    """Per-sender authentication keys plus tag computation/verification."""

    def __init__(self, ids, rng: random.Random):
        self._keys = {i: rng.getrandbits(256).to_bytes(32, "big") for i in ids}

    def tag(self, sender: int, body: bytes) -> bytes:
        key = self._keys[sender]
        return hashlib.sha256(key + body).digest()

    def check(self, sender: int, body: bytes, tag: bytes) -> bool:
        if sender not in self._keys:
            return False
        return self.tag(sender, body) == tag


class DecryptionError(Exception):
    pass


@dataclass(frozen=True)
class KeyPair:
    public: int
    secret: int


def _stream(key: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(hashlib.sha256(key + wire.u64(counter)).digest())
        counter += 1
    return bytes(out[:length])


class HybridScheme:
    """ElGamal-style KEM plus hash keystream plus integrity tag.

    Good enough to make eavesdropped ciphertexts opaque and tampered
    ciphertexts detectable inside the simulator.
    """

    name = "hybrid"

    def __init__(self, params: GroupParams):
        self.params = params

    def keygen(self, rng: random.Random) -> KeyPair:
        sk = rng.randrange(1, self.params.q)
        return KeyPair(public=pow(self.params.g, sk, self.params.p), secret=sk)

    def encrypt(self, public: int, plaintext: bytes, rng: random.Random) -> bytes:
        p, q, g = self.params.p, self.params.q, self.params.g
        y = rng.randrange(1, q)
        c1 = pow(g, y, p)
        shared = pow(public, y, p)
        key = hashlib.sha256(wire.big(shared)).digest()
        body = bytes(a ^ b for a, b in zip(plaintext, _stream(key, len(plaintext))))
        mac = hashlib.sha256(key + body).digest()
        return wire.big(c1) + wire.lp(body) + mac

    def decrypt(self, secret: int, ciphertext: bytes) -> bytes:
        p = self.params.p
        try:
            n1 = int.from_bytes(ciphertext[:4], "big")
            c1 = int.from_bytes(ciphertext[4 : 4 + n1], "big")
            off = 4 + n1
            n2 = int.from_bytes(ciphertext[off : off + 4], "big")
            body = ciphertext[off + 4 : off + 4 + n2]
            mac = ciphertext[off + 4 + n2 :]
        except Exception as exc:  # malformed framing
            raise DecryptionError("malformed ciphertext") from exc
        shared = pow(c1, secret, p)
        key = hashlib.sha256(wire.big(shared)).digest()
        if len(mac) != TAG_LEN or hashlib.sha256(key + body).digest() != mac:
            raise DecryptionError("integrity check failed")
        return bytes(a ^ b for a, b in zip(body, _stream(key, len(body))))


class IdentityScheme:
    """No-op scheme for fast scenarios that do not exercise privacy."""

    name = "identity"

    def __init__(self, params: GroupParams | None = None):
        self.params = params

    def keygen(self, rng: random.Random) -> KeyPair:
        return KeyPair(public=0, secret=0)

    def encrypt(self, public: int, plaintext: bytes, rng: random.Random) -> bytes:
        return plaintext

    def decrypt(self, secret: int, ciphertext: bytes) -> bytes:
        return ciphertext


def make_scheme(name: str, params: GroupParams):
    if name == "hybrid":
        return HybridScheme(params)
    if name == "identity":
        return IdentityScheme(params)
    raise ValueError(f"unknown encryption scheme {name!r}")
