"""Canonical byte encodings.

Everything that gets hashed, tagged, or compared bit-for-bit goes through
these helpers so that two processes (or two runs) always produce the same
bytes for the same value.
"""

from __future__ import annotations


def u8(x: int) -> bytes:
    return x.to_bytes(1, "big")


def u32(x: int) -> bytes:
    return x.to_bytes(4, "big")


def u64(x: int) -> bytes:
    return x.to_bytes(8, "big")


def lp(b: bytes) -> bytes:
    """Length-prefixed bytes: u32 length then the payload."""
    return u32(len(b)) + b


def big(x: int) -> bytes:
    """Length-prefixed big-endian encoding of a non-negative big integer."""
    if x < 0:
        raise ValueError("negative integer has no canonical encoding")
    n = max(1, (x.bit_length() + 7) // 8)
    return lp(x.to_bytes(n, "big"))


def pack_bigs(xs) -> bytes:
    """u32 count followed by each integer via big()."""
    out = [u32(len(xs))]
    out.extend(big(x) for x in xs)
    return b"".join(out)


def pack_blobs(bs) -> bytes:
    """u32 count followed by each blob length-prefixed."""
    out = [u32(len(bs))]
    out.extend(lp(b) for b in bs)
    return b"".join(out)


class Reader:
    """Cursor over canonical bytes; raises ValueError on truncation."""

    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.off + n > len(self.data):
            raise ValueError("truncated encoding")
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def lp(self) -> bytes:
        return self.take(self.u32())

    def big(self) -> int:
        return int.from_bytes(self.lp(), "big")

    def bigs(self) -> tuple:
        count = self.u32()
        return tuple(self.big() for _ in range(count))

    def blobs(self) -> list:
        count = self.u32()
        return [self.lp() for _ in range(count)]

    def expect_end(self):
        if self.off != len(self.data):
            raise ValueError("trailing bytes in encoding")
