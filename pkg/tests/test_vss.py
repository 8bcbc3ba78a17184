import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bftvss import vss
from bftvss.vss import (
    AGGREGATE_DEALER,
    CommitmentVector,
    InsufficientSharesError,
    MalformedInputError,
    ShareBundle,
    eval_poly,
)


class TestHandOracle:
    """Everything here is checkable by hand over q = 23."""

    def test_eval_poly(self):
        # f(x) = 5 + 3x
        assert eval_poly([5, 3], 1, 23) == 8
        assert eval_poly([5, 3], 2, 23) == 11
        assert eval_poly([5, 3], 3, 23) == 14

    def test_reconstruct_linear(self, tiny_group):
        # shares of f(x) = 5 + 3x at x = 1, 2 interpolate back to f(0) = 5
        bundles = [
            ShareBundle(dealer=0, recipient=1, eval_point=1, values=(8,)),
            ShareBundle(dealer=0, recipient=2, eval_point=2, values=(11,)),
        ]
        assert vss.reconstruct_encoded(bundles, 2, tiny_group) == (5,)

    def test_extra_shares_use_lowest_points(self, tiny_group):
        bundles = [
            ShareBundle(dealer=0, recipient=3, eval_point=3, values=(14,)),
            ShareBundle(dealer=0, recipient=1, eval_point=1, values=(8,)),
            ShareBundle(dealer=0, recipient=2, eval_point=2, values=(11,)),
        ]
        assert vss.reconstruct_encoded(bundles, 2, tiny_group) == (5,)

    def test_commitments_verify(self, tiny_group):
        # commitments for f(x) = 5 + 3x: (g^5, g^3) = (32, 8) mod 47
        assert pow(2, 5, 47) == 32 and pow(2, 3, 47) == 8
        commits = CommitmentVector(dealer=0, per_coordinate=((32, 8),))
        good = ShareBundle(dealer=0, recipient=2, eval_point=2, values=(11,))
        assert vss.verify(good, commits, tiny_group)
        bad = ShareBundle(dealer=0, recipient=2, eval_point=2, values=(12,))
        assert not vss.verify(bad, commits, tiny_group)


class TestShareReconstruct:
    def test_roundtrip_every_subset(self, group, codec, rng):
        secret = [1.25, -0.5, 3.0]
        bundles, commits = vss.share(secret, 3, 4, group, codec, rng, dealer=7)
        assert all(vss.verify(b, commits, group) for b in bundles)
        for subset in itertools.combinations(bundles, 3):
            assert vss.reconstruct(subset, 3, group, codec) == tuple(secret)

    def test_insufficient_shares(self, group, codec, rng):
        bundles, _ = vss.share([1.0], 3, 4, group, codec, rng)
        with pytest.raises(InsufficientSharesError):
            vss.reconstruct(bundles[:2], 3, group, codec)

    def test_duplicate_points_rejected(self, group, codec, rng):
        bundles, _ = vss.share([1.0], 2, 4, group, codec, rng)
        with pytest.raises(MalformedInputError):
            vss.reconstruct([bundles[0], bundles[0]], 2, group, codec)

    def test_mixed_dealers_rejected(self, group, codec, rng):
        a, _ = vss.share([1.0], 2, 4, group, codec, rng, dealer=1)
        b, _ = vss.share([1.0], 2, 4, group, codec, rng, dealer=2)
        with pytest.raises(MalformedInputError):
            vss.reconstruct([a[0], b[1]], 2, group, codec)

    def test_threshold_bounds(self, group, codec, rng):
        with pytest.raises(ValueError):
            vss.share([1.0], 0, 4, group, codec, rng)
        with pytest.raises(ValueError):
            vss.share([1.0], 5, 4, group, codec, rng)

    @given(st.lists(st.integers(-1 << 20, 1 << 20), min_size=1, max_size=8),
           st.integers(0, 2**32))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_property(self, group, codec, raw, seed):
        secret = [v / codec.scale for v in raw]
        rng = random.Random(seed)
        bundles, commits = vss.share(secret, 3, 4, group, codec, rng)
        assert all(vss.verify(b, commits, group) for b in bundles)
        assert vss.reconstruct(bundles, 3, group, codec) == tuple(secret)


class TestSoundness:
    def test_tampered_share_fails_verify(self, group, codec, rng):
        bundles, commits = vss.share([0.5, -0.5], 3, 4, group, codec, rng)
        b = bundles[1]
        tampered = ShareBundle(
            dealer=b.dealer, recipient=b.recipient, eval_point=b.eval_point,
            values=(b.values[0], (b.values[1] + 1) % group.q))
        assert not vss.verify(tampered, commits, group)

    def test_swapped_recipients_fail_verify(self, group, codec, rng):
        bundles, commits = vss.share([0.5], 3, 4, group, codec, rng)
        swapped = ShareBundle(dealer=0, recipient=1, eval_point=1,
                              values=bundles[1].values)
        assert not vss.verify(swapped, commits, group)

    def test_dealer_mismatch_raises(self, group, codec, rng):
        bundles, commits = vss.share([0.5], 3, 4, group, codec, rng, dealer=1)
        other = vss.replace_dealer(bundles[0], 2)
        with pytest.raises(MalformedInputError):
            vss.verify(other, commits, group)


class TestHiding:
    def test_below_threshold_shares_are_consistent_with_any_secret(self):
        """Surrogate for the hiding property, checked by exhaustive
        enumeration over a tiny field: given th-1 = 2 shares, every candidate
        secret admits exactly one degree-2 polynomial, so the shares reveal
        nothing."""
        q = 23
        for secret in range(q):
            count = 0
            for a1 in range(q):
                for a2 in range(q):
                    coeffs = [secret, a1, a2]
                    if eval_poly(coeffs, 1, q) == 8 and eval_poly(coeffs, 2, q) == 11:
                        count += 1
            assert count == 1


class TestHomomorphism:
    def test_sum_shares_reconstructs_sum(self, group, codec, rng):
        secrets = [[1.0, 2.0], [0.25, -1.0], [-0.5, 0.5]]
        dealt = [vss.share(s, 3, 4, group, codec, rng, dealer=d)[0]
                 for d, s in enumerate(secrets)]
        summed = [vss.sum_shares([dealt[d][j] for d in range(3)], group)
                  for j in range(4)]
        assert all(b.dealer == AGGREGATE_DEALER for b in summed)
        total = vss.reconstruct(summed, 3, group, codec)
        assert total == (0.75, 1.5)

    def test_sum_rejects_duplicate_dealers(self, group, codec, rng):
        a, _ = vss.share([1.0], 2, 4, group, codec, rng, dealer=1)
        with pytest.raises(MalformedInputError):
            vss.sum_shares([a[0], a[0]], group)

    def test_sum_rejects_mismatched_points(self, group, codec, rng):
        a, _ = vss.share([1.0], 2, 4, group, codec, rng, dealer=1)
        b, _ = vss.share([1.0], 2, 4, group, codec, rng, dealer=2)
        with pytest.raises(MalformedInputError):
            vss.sum_shares([a[0], b[1]], group)


class TestSerialization:
    def test_bundle_roundtrip(self, group, codec, rng):
        bundles, commits = vss.share([1.0, -2.0], 3, 4, group, codec, rng, dealer=3)
        for b in bundles:
            assert vss.parse_bundle(b.to_bytes()) == b
        assert vss.parse_commitments(commits.to_bytes()) == commits

    def test_truncated_bundle_rejected(self, group, codec, rng):
        bundles, _ = vss.share([1.0], 3, 4, group, codec, rng)
        data = bundles[0].to_bytes()
        with pytest.raises(MalformedInputError):
            vss.parse_bundle(data[:-1])
        with pytest.raises(MalformedInputError):
            vss.parse_bundle(data + b"\x00")

    def test_truncated_commitments_rejected(self, group, codec, rng):
        _, commits = vss.share([1.0], 3, 4, group, codec, rng)
        with pytest.raises(MalformedInputError):
            vss.parse_commitments(commits.to_bytes()[:-2])

    def test_eval_point_invariant(self):
        with pytest.raises(MalformedInputError):
            ShareBundle(dealer=0, recipient=1, eval_point=2, values=(1,))
