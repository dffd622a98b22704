"""Increment laws and walk families.

A family is built from one zero-mean base distribution F and a positive
scaling vector a with sum(a) = d: coordinate i of the walk steps by
a_i * x where x ~ F, independently across coordinates.  Lattice bases are
kept in exact rational arithmetic so that span and gcd identities hold
exactly; continuous bases carry cdf / inverse-cdf callables.

Two further walk kinds live here because the rest of the package treats
them through the same interfaces: the symmetric one-coordinate-at-a-time
lattice walk, and the one-dimensional walk with a level-dependent drift
that decays like 1/n.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd as _int_gcd
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError, UnsupportedModeError

__all__ = [
    "BaseDistribution",
    "FamilyParameter",
    "IncrementLaw",
    "SignedSplit",
    "ScaledFamily",
    "ScaledMember",
    "SymmetricFamily",
    "KlebanerFamily",
    "scale_distribution",
    "split_signed",
    "make_symmetric_family",
    "make_klebaner_family",
    "two_point_base",
    "uniform_lattice_base",
    "uniform_base",
    "truncated_normal_base",
    "as_fraction",
    "rational_gcd",
]

MASS_TOL = 1e-12
MEAN_TOL = 1e-12


def as_fraction(x):
    """Coerce to Fraction; floats go through repr so 1.2 means 6/5."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    raise InvalidParameterError(f"cannot interpret {x!r} as an exact rational")


def rational_gcd(values):
    """Largest rational g with every value an integer multiple of g.

    Accepts Fractions (or ints); gcd(a/b, c/d) = gcd(ad, cb)/(bd) reduced.
    """
    g = Fraction(0)
    for v in values:
        v = abs(as_fraction(v))
        if v == 0:
            continue
        if g == 0:
            g = v
        else:
            g = Fraction(_int_gcd(g.numerator * v.denominator,
                                  v.numerator * g.denominator),
                         g.denominator * v.denominator)
    return g


def _validate_lattice_pmf(pmf):
    out = {}
    for v, p in pmf.items():
        v = as_fraction(v)
        p = as_fraction(p)
        if p < 0:
            raise InvalidParameterError(f"negative probability {p} at {v}")
        if p > 0:
            out[v] = out.get(v, Fraction(0)) + p
    if len(out) < 2:
        raise InvalidParameterError("need at least two support points")
    total = sum(out.values())
    if abs(float(total) - 1.0) > MASS_TOL:
        raise InvalidParameterError(f"pmf mass {float(total)} is not 1")
    if total != 1:
        out = {v: p / total for v, p in out.items()}
    return out


@dataclass(frozen=True)
class BaseDistribution:
    """Zero-mean step distribution, lattice or continuous.

    Lattice: ``pmf`` maps rational values (integer multiples of ``span``)
    to rational probabilities.  Continuous: ``cdf`` and ``ppf`` callables
    plus the exact variance; ``support`` is the interval the mass lives on
    (may be infinite for unbounded laws).
    """

    kind: str
    span: Optional[Fraction] = None
    pmf: Optional[dict] = None
    cdf: Optional[Callable] = None
    ppf: Optional[Callable] = None
    var: Optional[float] = None
    support: Optional[tuple] = None
    label: str = "base"

    @staticmethod
    def lattice(pmf, span=None, label="lattice"):
        pmf = _validate_lattice_pmf(pmf)
        mean = sum(v * p for v, p in pmf.items())
        if abs(float(mean)) > MEAN_TOL:
            raise InvalidParameterError(f"lattice mean {float(mean)} is not 0")
        auto = rational_gcd(pmf.keys())
        if auto == 0:
            raise InvalidParameterError("lattice support cannot be {0}")
        if span is None:
            span = auto
        else:
            span = as_fraction(span)
            if span <= 0 or any((v / span).denominator != 1 for v in pmf):
                raise InvalidParameterError(
                    f"support is not on the span-{span} lattice")
        return BaseDistribution(kind="lattice", span=span, pmf=pmf, label=label)

    @staticmethod
    def continuous(cdf, ppf, var, support, label="continuous"):
        if var is None or var <= 0:
            raise InvalidParameterError("continuous base needs positive variance")
        return BaseDistribution(kind="continuous", cdf=cdf, ppf=ppf,
                                var=float(var), support=tuple(support),
                                label=label)

    @property
    def is_lattice(self):
        return self.kind == "lattice"

    def mean_exact(self):
        if not self.is_lattice:
            return Fraction(0)
        return sum(v * p for v, p in self.pmf.items())

    def variance_exact(self):
        if not self.is_lattice:
            raise UnsupportedModeError("exact variance needs a lattice base")
        m = self.mean_exact()
        return sum((v - m) ** 2 * p for v, p in self.pmf.items())

    @property
    def variance(self):
        if self.is_lattice:
            return float(self.variance_exact())
        return self.var

    def values_sorted(self):
        return sorted(self.pmf.keys())

    def sampling_tables(self):
        """(values float array, cumulative probs) for inverse-cdf draws."""
        vals = self.values_sorted()
        probs = np.array([float(self.pmf[v]) for v in vals])
        return np.array([float(v) for v in vals]), np.cumsum(probs)

    def sample(self, rng, size):
        if self.is_lattice:
            vals, cum = self.sampling_tables()
            idx = np.searchsorted(cum, rng.random(size), side="right")
            return vals[np.minimum(idx, len(vals) - 1)]
        return self.ppf(rng.random(size))


@dataclass(frozen=True)
class FamilyParameter:
    """Positive scaling vector with components summing to the dimension.

    Components are exact rationals; float inputs are read via repr, so
    ``FamilyParameter([1.2, 0.8])`` means (6/5, 4/5) and sums to 2 exactly.
    """

    components: tuple

    def __init__(self, components):
        comps = tuple(as_fraction(c) for c in components)
        if not comps:
            raise InvalidParameterError("empty parameter vector")
        if any(c <= 0 for c in comps):
            raise InvalidParameterError(f"components must be positive: {comps}")
        if sum(comps) != len(comps):
            raise InvalidParameterError(
                f"components sum to {sum(comps)}, expected {len(comps)}")
        object.__setattr__(self, "components", comps)

    @staticmethod
    def ones(d):
        return FamilyParameter([Fraction(1)] * d)

    @property
    def dimension(self):
        return len(self.components)

    @property
    def is_reference(self):
        return all(c == 1 for c in self.components)

    def sum_of_squares(self):
        return sum(c * c for c in self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __len__(self):
        return len(self.components)


@dataclass(frozen=True)
class IncrementLaw:
    """Base distribution scaled by one positive rational factor."""

    base: BaseDistribution
    scale: Fraction

    def __post_init__(self):
        object.__setattr__(self, "scale", as_fraction(self.scale))
        if self.scale <= 0:
            raise InvalidParameterError(f"scale must be positive: {self.scale}")

    @property
    def is_lattice(self):
        return self.base.is_lattice

    @property
    def span(self):
        if not self.is_lattice:
            raise UnsupportedModeError("continuous law has no span")
        return self.scale * self.base.span

    def lattice_pmf(self):
        if not self.is_lattice:
            raise UnsupportedModeError("continuous law has no pmf")
        return {self.scale * v: p for v, p in self.base.pmf.items()}

    def mean_exact(self):
        return self.scale * self.base.mean_exact()

    @property
    def variance(self):
        return float(self.scale) ** 2 * self.base.variance

    def cdf(self, x):
        if self.is_lattice:
            s = float(self.scale)
            vals, cum = self.base.sampling_tables()
            idx = np.searchsorted(vals * s, x, side="right")
            cum = np.concatenate([[0.0], cum])
            return cum[idx]
        return self.base.cdf(np.asarray(x) / float(self.scale))

    def sample(self, rng, size):
        return float(self.scale) * self.base.sample(rng, size)


def scale_distribution(base, scale):
    """Member law for one coordinate: x -> scale * x."""
    return IncrementLaw(base=base, scale=as_fraction(scale))


@dataclass(frozen=True)
class SignedSplit:
    """Decomposition of a lattice law into sign and magnitude.

    ``p_plus`` is the mass at x >= 0; ``b_pmf`` is the law of x given
    x >= 0 (zero allowed), ``bt_pmf`` the law of -x given x < 0 (strictly
    positive).  All entries exact rationals, so recombination is exact.
    """

    p_plus: Fraction
    b_pmf: dict
    bt_pmf: dict

    @property
    def strict_consistent(self):
        """Whether signs are equally likely, which also forces E B = E Bt."""
        return self.p_plus == Fraction(1, 2)

    def mean_b(self):
        return sum(v * p for v, p in self.b_pmf.items())

    def mean_bt(self):
        return sum(v * p for v, p in self.bt_pmf.items())

    def positive_support(self):
        """All strictly positive magnitudes either side can produce."""
        vals = {v for v in self.b_pmf if v > 0}
        vals.update(self.bt_pmf)
        return sorted(vals)

    def recombine(self):
        """Inverse of split_signed; exact."""
        pmf = {v: self.p_plus * p for v, p in self.b_pmf.items()}
        q = 1 - self.p_plus
        for v, p in self.bt_pmf.items():
            pmf[-v] = pmf.get(-v, Fraction(0)) + q * p
        return pmf


def split_signed(law):
    """Split a lattice law (BaseDistribution or IncrementLaw) by sign."""
    if isinstance(law, IncrementLaw):
        pmf = law.lattice_pmf()
    elif isinstance(law, BaseDistribution):
        if not law.is_lattice:
            raise UnsupportedModeError("split_signed needs a lattice law")
        pmf = law.pmf
    else:
        raise UnsupportedModeError(f"cannot split {type(law).__name__}")
    p_plus = sum(p for v, p in pmf.items() if v >= 0)
    if p_plus == 0 or p_plus == 1:
        raise InvalidParameterError("all mass on one side; split is degenerate")
    b = {v: p / p_plus for v, p in pmf.items() if v >= 0}
    bt = {-v: p / (1 - p_plus) for v, p in pmf.items() if v < 0}
    return SignedSplit(p_plus=p_plus, b_pmf=b, bt_pmf=bt)


@dataclass(frozen=True)
class ScaledMember:
    """One member of a scaled family: d independent scaled coordinates."""

    base: BaseDistribution
    a: FamilyParameter
    laws: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "laws",
            tuple(IncrementLaw(self.base, c) for c in self.a.components))

    @property
    def dimension(self):
        return self.a.dimension

    @property
    def is_lattice(self):
        return self.base.is_lattice

    @property
    def is_reference(self):
        return self.a.is_reference

    def split(self):
        return split_signed(self.base)

    def coordinate_values(self):
        """Per-coordinate support values (lattice only), as Fractions."""
        return [sorted(law.lattice_pmf().keys()) for law in self.laws]

    def common_unit(self):
        """Finest rational u with every coordinate value a multiple of u."""
        vals = []
        for law in self.laws:
            vals.extend(law.lattice_pmf().keys())
        u = rational_gcd(vals)
        if u == 0:
            raise InvalidParameterError("degenerate member support")
        return u

    def describe(self):
        return {
            "base": self.base.label,
            "a": [str(c) for c in self.a.components],
            "dimension": self.dimension,
            "kind": self.base.kind,
        }


@dataclass(frozen=True)
class ScaledFamily:
    """Family of walks indexed by the scaling vector."""

    base: BaseDistribution
    dimension: int

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidParameterError("dimension must be >= 1")

    def member(self, a):
        if not isinstance(a, FamilyParameter):
            a = FamilyParameter(a)
        if a.dimension != self.dimension:
            raise InvalidParameterError(
                f"parameter has {a.dimension} components, family needs {self.dimension}")
        return ScaledMember(base=self.base, a=a)

    def reference(self):
        return self.member(FamilyParameter.ones(self.dimension))


@dataclass(frozen=True)
class SymmetricFamily:
    """Lattice walk moving one coordinate by +-1 per step.

    Coordinate i is chosen with probability 2 * alphas[i]; the sign is
    fair.  The l1 norm changes by exactly one each step.
    """

    alphas: tuple

    def __init__(self, alphas):
        al = tuple(as_fraction(x) for x in alphas)
        if any(x <= 0 for x in al):
            raise InvalidParameterError("alphas must be positive")
        if 2 * sum(al) != 1:
            raise InvalidParameterError(
                f"alphas must satisfy 2*sum = 1, got sum {sum(al)}")
        object.__setattr__(self, "alphas", al)

    @property
    def dimension(self):
        return len(self.alphas)

    @property
    def is_lattice(self):
        return True

    def describe(self):
        return {"kind": "symmetric", "alphas": [str(x) for x in self.alphas],
                "dimension": self.dimension}


def make_symmetric_family(alphas):
    return SymmetricFamily(alphas)


@dataclass(frozen=True)
class KlebanerFamily:
    """One-dimensional level walk with drift decaying like 1/n.

    From level n > 0 the walk moves up with probability 1/2 + alpha(n)/n
    and down otherwise; from 0 it moves to 1.  ``alpha`` may be a constant
    or a callable of n; it must satisfy |alpha(n)| < min(c, n/2) and
    converge to ``alpha_star``.
    """

    alpha: object
    alpha_star: float
    c: float = 0.5

    def __post_init__(self):
        if not (self.c > 0):
            raise InvalidParameterError("bound c must be positive")
        if abs(self.alpha_star) > self.c:
            raise InvalidParameterError("alpha_star exceeds the stated bound c")

    @property
    def dimension(self):
        return 1

    @property
    def is_lattice(self):
        return True

    def alpha_at(self, n):
        a = self.alpha(n) if callable(self.alpha) else self.alpha
        a = float(a)
        if not abs(a) < min(self.c, n / 2):
            raise InvalidParameterError(
                f"alpha({n}) = {a} violates |alpha| < min({self.c}, {n / 2})")
        return a

    def up_probability(self, n):
        """One-step probability that the level increases from n."""
        n = int(n)
        if n < 0:
            raise InvalidParameterError("level must be nonnegative")
        if n == 0:
            return 1.0
        return 0.5 + self.alpha_at(n) / n

    def up_probabilities(self, n_max):
        """Vectorised table of up-probabilities for levels 0..n_max."""
        p = np.empty(n_max + 1)
        p[0] = 1.0
        for n in range(1, n_max + 1):
            p[n] = self.up_probability(n)
        return p

    def describe(self):
        return {"kind": "klebaner", "alpha_star": self.alpha_star, "c": self.c}


def make_klebaner_family(alpha, alpha_star=None, c=0.5):
    """Build the decaying-drift level walk.

    ``alpha`` constant: alpha_star defaults to it.  ``alpha`` callable:
    alpha_star must be supplied.
    """
    if alpha_star is None:
        if callable(alpha):
            raise InvalidParameterError("alpha_star required for callable alpha")
        alpha_star = float(alpha)
    return KlebanerFamily(alpha=alpha, alpha_star=float(alpha_star), c=c)


# canonical bases ------------------------------------------------------------

def two_point_base(value=1):
    v = as_fraction(value)
    if v <= 0:
        raise InvalidParameterError("two-point value must be positive")
    return BaseDistribution.lattice({-v: Fraction(1, 2), v: Fraction(1, 2)},
                                    label=f"two_point({v})")


def uniform_lattice_base(k, span=1, include_zero=True):
    """Uniform on {-k..k}*span (zero optional); symmetric, mean zero."""
    k = int(k)
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    span = as_fraction(span)
    points = [j for j in range(-k, k + 1) if include_zero or j != 0]
    p = Fraction(1, len(points))
    return BaseDistribution.lattice({span * j: p for j in points},
                                    span=span, label=f"uniform_lattice({k})")


def uniform_base(halfwidth=1.0):
    c = float(halfwidth)
    if c <= 0:
        raise InvalidParameterError("halfwidth must be positive")

    def cdf(x):
        return np.clip((np.asarray(x, dtype=float) + c) / (2 * c), 0.0, 1.0)

    def ppf(u):
        return (2 * np.asarray(u, dtype=float) - 1) * c

    return BaseDistribution.continuous(cdf=cdf, ppf=ppf, var=c * c / 3.0,
                                       support=(-c, c), label=f"uniform({c})")


def truncated_normal_base(sigma=1.0, cutoff=3.0):
    """Centered normal conditioned on |x| <= cutoff * sigma."""
    from scipy.stats import truncnorm

    sigma = float(sigma)
    cutoff = float(cutoff)
    if sigma <= 0 or cutoff <= 0:
        raise InvalidParameterError("sigma and cutoff must be positive")
    dist = truncnorm(-cutoff, cutoff, loc=0.0, scale=sigma)
    return BaseDistribution.continuous(
        cdf=dist.cdf, ppf=dist.ppf, var=float(dist.var()),
        support=(-cutoff * sigma, cutoff * sigma),
        label=f"truncated_normal({sigma},{cutoff})")
