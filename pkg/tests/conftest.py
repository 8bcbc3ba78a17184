import random

import pytest

from bftvss.field import FixedPointCodec, GroupParams, generate_group


@pytest.fixture(scope="session")
def tiny_group() -> GroupParams:
    """Hand-checkable parameters: q = 23, p = 2q + 1 = 47, g = 2 (2^23 = 1 mod 47)."""
    params = GroupParams(p=47, q=23, g=2)
    params.validate()
    return params


@pytest.fixture(scope="session")
def group() -> GroupParams:
    """The default production-shaped group (96-bit p, 48-bit q)."""
    return generate_group(96, 48, 0)


@pytest.fixture(scope="session")
def codec(group) -> FixedPointCodec:
    return FixedPointCodec(16, group.q)


@pytest.fixture()
def rng() -> random.Random:
    return random.Random(12345)
