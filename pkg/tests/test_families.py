"""Construction and invariants of step distributions and family parameters."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_zero_mean_pmf
from walkfam.errors import InvalidParameterError, UnsupportedModeError
from walkfam.families import (
    BaseDistribution,
    FamilyParameter,
    IncrementLaw,
    ScaledFamily,
    SymmetricFamily,
    as_fraction,
    make_klebaner_family,
    rational_gcd,
    split_signed,
    truncated_normal_base,
    two_point_base,
    uniform_base,
    uniform_lattice_base,
)
from walkfam.rng import stream


def test_as_fraction_reads_floats_through_repr():
    assert as_fraction(1.2) == Fraction(6, 5)
    assert as_fraction(0.8) == Fraction(4, 5)
    assert as_fraction(1.5) == Fraction(3, 2)
    assert as_fraction("3/20") == Fraction(3, 20)
    assert as_fraction(2) == Fraction(2)
    assert as_fraction(Fraction(7, 3)) == Fraction(7, 3)
    with pytest.raises(InvalidParameterError):
        as_fraction(object())


def test_rational_gcd_examples():
    assert rational_gcd([Fraction(3, 20), Fraction(1, 10)]) == Fraction(1, 20)
    assert rational_gcd([2, 4, 6]) == 2
    assert rational_gcd([Fraction(12, 5), Fraction(8, 5)]) == Fraction(4, 5)
    assert rational_gcd([0, 0]) == 0
    assert rational_gcd([]) == 0


@given(st.lists(st.fractions(min_value=Fraction(1, 12), max_value=12,
                             max_denominator=12),
                min_size=1, max_size=6))
@settings(max_examples=100, deadline=None)
def test_rational_gcd_divides_and_is_maximal(values):
    g = rational_gcd(values)
    assert g > 0
    multiples = [v / g for v in values]
    assert all(m.denominator == 1 for m in multiples)
    # maximality: the integer multiples share no common factor
    assert rational_gcd(multiples) == 1


def test_lattice_base_rejects_nonzero_mean():
    with pytest.raises(InvalidParameterError):
        BaseDistribution.lattice({-1: Fraction(1, 2), 2: Fraction(1, 2)})


def test_lattice_base_rejects_degenerate_support():
    with pytest.raises(InvalidParameterError):
        BaseDistribution.lattice({0: 1})
    with pytest.raises(InvalidParameterError):
        BaseDistribution.lattice({-1: Fraction(1, 2), 1: Fraction(-1, 2)})


def test_lattice_base_rejects_span_mismatch():
    with pytest.raises(InvalidParameterError):
        BaseDistribution.lattice({-1: Fraction(1, 2), 1: Fraction(1, 2)},
                                 span=2)


def test_lattice_span_defaults_to_gcd_of_support():
    base = BaseDistribution.lattice({Fraction(-3, 2): Fraction(1, 2),
                                     Fraction(3, 2): Fraction(1, 2)})
    assert base.span == Fraction(3, 2)
    assert two_point_base(2).span == 2


def test_canonical_bases():
    b = two_point_base()
    assert b.pmf == {-1: Fraction(1, 2), 1: Fraction(1, 2)}
    assert b.variance_exact() == 1

    u = uniform_lattice_base(2)
    assert sorted(u.pmf) == [-2, -1, 0, 1, 2]
    assert all(p == Fraction(1, 5) for p in u.pmf.values())
    assert u.variance_exact() == 2

    u2 = uniform_lattice_base(2, include_zero=False)
    assert sorted(u2.pmf) == [-2, -1, 1, 2]
    assert u2.variance_exact() == Fraction(5, 2)

    c = uniform_base(1.0)
    assert not c.is_lattice
    assert c.var == pytest.approx(1 / 3)
    assert c.cdf(0.0) == pytest.approx(0.5)
    assert c.cdf(1.0) == pytest.approx(1.0)
    assert c.ppf(c.cdf(0.25)) == pytest.approx(0.25)

    t = truncated_normal_base(1.0, 3.0)
    assert not t.is_lattice
    assert 0 < t.var < 1


def test_family_parameter_requires_exact_sum():
    a = FamilyParameter([1.5, 0.5])
    assert a.components == (Fraction(3, 2), Fraction(1, 2))
    assert FamilyParameter([1.2, 0.8]).components == (Fraction(6, 5),
                                                      Fraction(4, 5))
    with pytest.raises(InvalidParameterError):
        FamilyParameter([1.2, 0.9])
    with pytest.raises(InvalidParameterError):
        FamilyParameter([2.0])
    with pytest.raises(InvalidParameterError):
        FamilyParameter([2.5, -0.5])
    with pytest.raises(InvalidParameterError):
        FamilyParameter([])


def _valid_parameters(max_dimension=4):
    """Strategy over valid scaling vectors on the 1/20 grid."""
    def build(draw):
        d = draw(st.integers(min_value=1, max_value=max_dimension))
        head = [draw(st.fractions(min_value=Fraction(1, 20),
                                  max_value=Fraction(39, 20),
                                  max_denominator=20))
                for _ in range(d - 1)]
        last = Fraction(d) - sum(head)
        if last <= 0:
            return None
        return FamilyParameter(head + [last])
    return st.composite(lambda draw: build(draw))().filter(
        lambda a: a is not None)


@given(_valid_parameters())
@settings(max_examples=100, deadline=None)
def test_sum_of_squares_at_least_dimension(a):
    ss = a.sum_of_squares()
    assert ss >= a.dimension
    assert (ss == a.dimension) == a.is_reference


@pytest.mark.parametrize("base", [two_point_base(2), uniform_lattice_base(2)])
@pytest.mark.parametrize("a", [(1.5, 0.5), (1.2, 0.8), (1.0, 1.0)])
def test_scaled_coordinate_mean_and_variance(base, a):
    member = ScaledFamily(base=base, dimension=2).member(a)
    for a_i, law in zip(member.a, member.laws):
        pmf = law.lattice_pmf()
        assert sum(v * p for v, p in pmf.items()) == 0
        want = float(a_i) ** 2 * base.variance
        assert abs(law.variance - want) <= 1e-10


def test_scaled_coordinate_variance_continuous():
    member = ScaledFamily(base=uniform_base(1.0), dimension=2).member([1.2, 0.8])
    for a_i, law in zip(member.a, member.laws):
        assert abs(law.variance - float(a_i) ** 2 / 3) <= 1e-10


def test_coordinate_supports_scale_with_member():
    fam = ScaledFamily(base=two_point_base(2), dimension=2)
    member = fam.member([1.5, 0.5])
    assert member.coordinate_values() == [[-3, 3], [-1, 1]]
    assert [law.span for law in member.laws] == [3, 1]
    assert member.common_unit() == 1

    other = fam.member([1.2, 0.8])
    assert other.coordinate_values() == [
        [Fraction(-12, 5), Fraction(12, 5)],
        [Fraction(-8, 5), Fraction(8, 5)],
    ]
    assert other.common_unit() == Fraction(4, 5)


def test_member_dimension_checked():
    fam = ScaledFamily(base=two_point_base(), dimension=2)
    with pytest.raises(InvalidParameterError):
        fam.member([1.0, 1.0, 1.0])
    assert fam.reference().is_reference


@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
@settings(max_examples=60, deadline=None)
def test_split_then_recombine_is_exact(seed):
    pmf = random_zero_mean_pmf(seed)
    base = BaseDistribution.lattice(pmf)
    split = split_signed(base)
    assert split.recombine() == base.pmf
    assert sum(split.b_pmf.values()) == 1
    assert sum(split.bt_pmf.values()) == 1
    assert all(v > 0 for v in split.bt_pmf)
    assert all(v >= 0 for v in split.b_pmf)


def test_split_consistency_flag():
    assert split_signed(two_point_base(2)).strict_consistent
    skew = BaseDistribution.lattice({2: Fraction(1, 3), -1: Fraction(2, 3)})
    split = split_signed(skew)
    assert split.p_plus == Fraction(1, 3)
    assert not split.strict_consistent
    # balanced signs force equal conditional means
    sym = split_signed(uniform_lattice_base(2, include_zero=False))
    assert sym.strict_consistent
    assert sym.mean_b() == sym.mean_bt()


def test_split_rejects_one_sided_law():
    # positive support only cannot be zero mean, so feed the splitter an
    # IncrementLaw around a artificially shifted pmf is not possible;
    # exercise the degenerate branch through a law with all mass at >= 0
    with pytest.raises(InvalidParameterError):
        split_signed(BaseDistribution.lattice({0: Fraction(1, 2),
                                               1: Fraction(1, 2)}))


def test_increment_law_cdf_matches_pmf():
    law = IncrementLaw(base=two_point_base(2), scale=Fraction(3, 2))
    assert law.lattice_pmf() == {Fraction(-3): Fraction(1, 2),
                                 Fraction(3): Fraction(1, 2)}
    assert law.cdf(-3.0) == pytest.approx(0.5)
    assert law.cdf(0.0) == pytest.approx(0.5)
    assert law.cdf(3.0) == pytest.approx(1.0)
    assert law.cdf(-3.1) == pytest.approx(0.0)


def test_increment_law_sampling_stays_on_support():
    law = IncrementLaw(base=two_point_base(2), scale=Fraction(1, 2))
    draws = law.sample(stream(123), 4096)
    assert set(np.unique(draws)) == {-1.0, 1.0}

    cont = IncrementLaw(base=uniform_base(1.0), scale=Fraction(6, 5))
    draws = cont.sample(stream(124), 4096)
    assert draws.min() >= -1.2 and draws.max() <= 1.2
    assert abs(draws.mean()) < 4 * 1.2 / np.sqrt(3 * 4096)


def test_symmetric_family_constraint():
    fam = SymmetricFamily([0.25, 0.25])
    assert fam.dimension == 2
    assert fam.alphas == (Fraction(1, 4), Fraction(1, 4))
    with pytest.raises(InvalidParameterError):
        SymmetricFamily([0.5, 0.5])
    with pytest.raises(InvalidParameterError):
        SymmetricFamily([0.75, -0.25])


def test_klebaner_family_probabilities():
    fam = make_klebaner_family(0.25)
    assert fam.up_probability(0) == 1.0
    assert fam.up_probability(1) == pytest.approx(0.75)
    assert fam.up_probability(100) == pytest.approx(0.5 + 0.25 / 100)
    table = fam.up_probabilities(50)
    assert table.shape == (51,)
    assert table[0] == 1.0
    assert np.all(table[1:] > 0.5)

    decaying = make_klebaner_family(lambda n: 0.25 + 1.0 / n ** 2,
                                    alpha_star=0.25, c=2.0)
    assert decaying.up_probability(2) == pytest.approx(0.5 + (0.25 + 0.25) / 2)

    with pytest.raises(InvalidParameterError):
        make_klebaner_family(0.75, c=0.5)
    with pytest.raises(InvalidParameterError):
        make_klebaner_family(lambda n: 0.25)
    with pytest.raises(InvalidParameterError):
        # |alpha(1)| >= 1/2 is out of range at level 1
        make_klebaner_family(lambda n: 0.6 if n == 1 else 0.1,
                             alpha_star=0.1, c=0.7).up_probability(1)
