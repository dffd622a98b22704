"""Shared fixtures and seeded builders for the test suite."""

from fractions import Fraction

import numpy as np
import pytest

from walkfam.families import (
    BaseDistribution,
    FamilyParameter,
    ScaledFamily,
    two_point_base,
)


@pytest.fixture(scope="session")
def pm1_family():
    """d=1 family on the fair +-1 base."""
    return ScaledFamily(base=two_point_base(1), dimension=1)


@pytest.fixture(scope="session")
def pm2_family():
    """d=2 family on the fair +-2 base."""
    return ScaledFamily(base=two_point_base(2), dimension=2)


def random_positive_pmf(seed, max_points=5):
    """Seeded positive lattice pmf with exact rational weights."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, max_points + 1))
    support = rng.choice(np.arange(1, 9), size=k, replace=False)
    weights = rng.integers(1, 10, size=k)
    total = int(weights.sum())
    return {Fraction(int(v)): Fraction(int(w), total)
            for v, w in zip(support, weights)}


def random_parameter(seed, dimension):
    """Seeded positive rational vector summing to the dimension exactly."""
    rng = np.random.default_rng(seed)
    while True:
        head = [Fraction(int(rng.integers(1, 10 * dimension)), 10)
                for _ in range(dimension - 1)]
        last = Fraction(dimension) - sum(head)
        if last > 0:
            return FamilyParameter(head + [last])


def random_zero_mean_pmf(seed, max_blocks=3):
    """Seeded zero-mean lattice pmf built from balanced two-point blocks.

    Each block puts mass at n2 and -n1 in proportion n1 : n2, so its mean
    is zero exactly; mixing blocks keeps the mean at zero.
    """
    rng = np.random.default_rng(seed)
    pmf = {}
    for _ in range(int(rng.integers(1, max_blocks + 1))):
        n1 = int(rng.integers(1, 5))
        n2 = int(rng.integers(1, 5))
        w = Fraction(int(rng.integers(1, 6)))
        pmf[Fraction(n2)] = pmf.get(Fraction(n2), Fraction(0)) + w * n1
        pmf[Fraction(-n1)] = pmf.get(Fraction(-n1), Fraction(0)) + w * n2
    total = sum(pmf.values())
    pmf = {v: p / total for v, p in pmf.items()}
    if len(pmf) < 2:
        return random_zero_mean_pmf(seed + 1, max_blocks)
    return pmf


def make_zero_mean_base(seed):
    return BaseDistribution.lattice(random_zero_mean_pmf(seed))
