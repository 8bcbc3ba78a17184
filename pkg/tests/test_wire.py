import pytest
from hypothesis import given
from hypothesis import strategies as st

from bftvss import wire


class TestPrimitives:
    def test_u32_layout(self):
        assert wire.u32(1) == b"\x00\x00\x00\x01"

    def test_lp_layout(self):
        assert wire.lp(b"ab") == b"\x00\x00\x00\x02ab"

    @given(st.integers(0, 2**256))
    def test_big_roundtrip(self, x):
        r = wire.Reader(wire.big(x))
        assert r.big() == x
        r.expect_end()

    @given(st.lists(st.integers(0, 2**128), max_size=8))
    def test_bigs_roundtrip(self, xs):
        r = wire.Reader(wire.pack_bigs(xs))
        assert list(r.bigs()) == xs
        r.expect_end()

    @given(st.lists(st.binary(max_size=32), max_size=8))
    def test_blobs_roundtrip(self, bs):
        r = wire.Reader(wire.pack_blobs(bs))
        assert r.blobs() == bs
        r.expect_end()

    @given(st.integers(0, 255), st.integers(0, 2**32 - 1), st.integers(0, 2**64 - 1),
           st.binary(max_size=64))
    def test_mixed_roundtrip(self, a, b, c, blob):
        data = wire.u8(a) + wire.u32(b) + wire.u64(c) + wire.lp(blob)
        r = wire.Reader(data)
        assert (r.u8(), r.u32(), r.u64(), r.lp()) == (a, b, c, blob)
        r.expect_end()


class TestReaderErrors:
    def test_truncated_u32(self):
        with pytest.raises(ValueError):
            wire.Reader(b"\x00\x00").u32()

    def test_truncated_blob(self):
        with pytest.raises(ValueError):
            wire.Reader(b"\x00\x00\x00\x05ab").lp()

    def test_trailing_bytes_rejected(self):
        r = wire.Reader(b"\x01\x02")
        r.u8()
        with pytest.raises(ValueError):
            r.expect_end()
