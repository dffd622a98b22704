"""Exact conditional outward-step probability at a norm level.

Conditioning the reflected walk's norm on a level z splits, in the long
run, into coordinate profiles: nonnegative integers k with
sum_i a_i * k_i = z / g, where g is the gcd of the base law's positive
magnitudes.  Each profile is weighted by the product of the base chain's
limiting state ratios q_{k_i}, and contributes its exact one-step
probability that the norm strictly increases.  Everything except the q
weights is rational arithmetic.

Coordinates step on a shared clock.  When every base magnitude is an odd
multiple of g each coordinate's level parity tracks the clock parity, so
only profiles whose entries share one parity are ever occupied; the sum
keeps to those, and a level whose profiles all mix parities raises as
unreachable even though it sits on the lattice.

The enumeration cost is about (z/g)^(d-1) * |support|^d terms, so the
entry point refuses instances beyond small dimension, moderate level, and
small support, reporting the estimate it refused at.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..ck_solver import LatticeSpec, QExtraction, extract_q, integrate_spec
from ..errors import (CostLimitError, InvalidParameterError,
                      UnconvergedError, UnreachableLevelError,
                      UnsupportedModeError)
from ..families import ScaledMember, as_fraction, rational_gcd, split_signed

__all__ = [
    "NDResult",
    "exact_nd",
    "parity_locked",
    "profile_change_pmf",
    "reachable_profiles",
    "limiting_ratios",
]

MAX_DIMENSION = 3
MAX_UNITS = 20
MAX_SUPPORT = 6


def reachable_profiles(a, target, *, same_parity=False):
    """All nonnegative integer vectors k with sum_i a[i] * k_i == target.

    ``a`` holds positive rationals, ``target`` a rational; yields tuples.
    With ``same_parity`` only vectors whose entries share one parity come
    back; see ``parity_locked`` for when that restriction applies.
    """
    a = tuple(as_fraction(x) for x in a)
    target = as_fraction(target)

    def rec(i, residual, prefix):
        if i == len(a) - 1:
            k = residual / a[i]
            if k.denominator == 1 and k >= 0:
                yield prefix + (int(k),)
            return
        top = int(residual / a[i])
        for k in range(top + 1):
            yield from rec(i + 1, residual - k * a[i], prefix + (k,))

    if target < 0:
        return iter(())
    gen = rec(0, target, ())
    if not same_parity:
        return gen
    return (ks for ks in gen if len({k % 2 for k in ks}) <= 1)


def parity_locked(split, unit):
    """Whether every base magnitude is an odd multiple of the gcd.

    All coordinates step once per clock tick, so when every step moves a
    coordinate by an odd number of gcd levels, each coordinate's level
    parity equals the tick parity.  Profiles mixing parities then never
    occur, and the level sum parity is invariant.  A support with both
    odd and even multiples leaves every profile reachable.
    """
    return all((v / unit) % 2 == 1 for v in split.positive_support())


def _convolve(p, q):
    out = {}
    for u, pu in p.items():
        for v, qv in q.items():
            w = u + v
            out[w] = out.get(w, Fraction(0)) + pu * qv
    return out


def _coordinate_change_pmf(split, a_i, k_i, unit):
    """Norm-change law of one coordinate sitting at k_i gcd levels.

    A positive batch adds a_i * b.  A negative one removes a_i * bt when
    it fits, else the excess reflects: the change is a_i * (bt - 2 k_i g).
    """
    out = {}
    q_minus = 1 - split.p_plus
    thresh = k_i * unit
    for b, p in split.b_pmf.items():
        d = a_i * b
        out[d] = out.get(d, Fraction(0)) + split.p_plus * p
    for bt, p in split.bt_pmf.items():
        if bt <= thresh:
            d = -a_i * bt
        else:
            d = a_i * (bt - 2 * thresh)
        out[d] = out.get(d, Fraction(0)) + q_minus * p
    return out


def profile_change_pmf(split, a, ks, unit):
    """Exact pmf of the total norm change from profile ``ks``."""
    pmf = {Fraction(0): Fraction(1)}
    for a_i, k_i in zip(a, ks):
        pmf = _convolve(pmf, _coordinate_change_pmf(split, as_fraction(a_i),
                                                    int(k_i), unit))
    return pmf


def limiting_ratios(member, levels, *, t_end=500.0, sign_prob=None):
    """Base-chain limiting ratios q_0..q_levels for a lattice member.

    The horizon is raised automatically when the requested levels would
    not be diffusively settled by ``t_end``.  Raises if the extraction
    still misses its convergence criteria.
    """
    if not isinstance(member, ScaledMember) or not member.is_lattice:
        raise UnsupportedModeError("limiting ratios need a lattice member")
    spec = LatticeSpec.from_law(member.base, sign_prob=sign_prob)
    s2 = max(spec.sigma2(), 1e-12)
    # settle factor exp(-L^2/(2 s2 t)) must clear its 0.5 gate
    t_end = max(float(t_end), 1.25 * levels ** 2 / (2.0 * s2 * math.log(2.0)))
    n_max = max(spec.default_n_max(t_end), 2 * levels + 10)
    sol = integrate_spec(spec, t_end, n_max=n_max)
    ext = extract_q(sol, levels=levels)
    if not ext.converged:
        raise UnconvergedError(
            "limiting ratios unconverged: plateau {:.3g}, settle {:.3g}, "
            "truncation {:.3g}; raise t_end or n_max".format(
                ext.plateau_error, ext.settle_factor, ext.truncation_error))
    return ext


@dataclass(frozen=True)
class NDResult:
    """Exact conditional outward probability and its ingredients."""

    z: Fraction
    ratio: float
    numerator: float
    denominator: float
    unit: Fraction              # gcd of the base positive magnitudes
    units: Fraction             # z / unit, the profile budget
    profile_count: int
    max_level: int              # largest gcd level any profile uses
    mode: str
    profiles: tuple             # rows (ks, weight, exact outward prob)
    parity_locked: bool = False

    def as_dict(self):
        return {
            "z": float(self.z),
            "ratio": self.ratio,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "unit": float(self.unit),
            "units": float(self.units),
            "profile_count": self.profile_count,
            "max_level": self.max_level,
            "mode": self.mode,
            "parity_locked": self.parity_locked,
        }


def _cost_guard(Z, d, support_size, force):
    est = int((float(Z) + 1) ** max(d - 1, 0) * support_size ** d)
    if force:
        return est
    if d > MAX_DIMENSION:
        raise CostLimitError(
            f"dimension {d} exceeds the exact-mode bound {MAX_DIMENSION} "
            f"(about {est} terms)", estimated_terms=est)
    if Z > MAX_UNITS:
        raise CostLimitError(
            f"level {float(Z)} gcd units exceeds the exact-mode bound "
            f"{MAX_UNITS} (about {est} terms)", estimated_terms=est)
    if support_size > MAX_SUPPORT:
        raise CostLimitError(
            f"support size {support_size} exceeds the exact-mode bound "
            f"{MAX_SUPPORT} (about {est} terms)", estimated_terms=est)
    return est


def exact_nd(member, z, q=None, *, mode="auto", t_end=500.0, sign_prob=None,
             keep_profiles=True, force=False):
    """Limiting conditional probability of an outward step at norm z.

    ``q`` supplies the base-chain limiting ratios: a QExtraction (must be
    converged), a plain sequence indexed by gcd level, or None to solve
    for them here.  ``mode`` is "auto", "simple" (reference member only),
    or "regular".  Off-lattice levels raise UnreachableLevelError.
    """
    if not isinstance(member, ScaledMember):
        raise UnsupportedModeError("exact mode needs a scaled-family member")
    if not member.is_lattice:
        raise UnsupportedModeError("exact mode needs a lattice base")
    z = as_fraction(z)
    if z <= 0:
        raise InvalidParameterError("level z must be positive")

    if mode not in ("auto", "simple", "regular"):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    if mode == "simple" and not member.is_reference:
        raise InvalidParameterError("simple mode applies to the reference "
                                    "member only")
    if mode == "auto":
        mode = "simple" if member.is_reference else "regular"

    split = split_signed(member.base)
    unit = rational_gcd(split.positive_support())
    Z = z / unit
    a = member.a.components
    d = member.dimension
    support_size = len(split.b_pmf) + len(split.bt_pmf)
    _cost_guard(Z, d, support_size, force)

    locked = parity_locked(split, unit)
    profiles = list(reachable_profiles(a, Z, same_parity=locked))
    if not profiles:
        if locked and any(True for _ in reachable_profiles(a, Z)):
            raise UnreachableLevelError(
                f"norm level {z} is on the lattice but never occupied: "
                f"every profile mixes coordinate parities and all steps "
                f"flip parity, for a = {tuple(str(c) for c in a)}")
        raise UnreachableLevelError(
            f"norm level {z} admits no coordinate profile for a = "
            f"{tuple(str(c) for c in a)} (gcd {unit})")
    max_level = max(max(ks) for ks in profiles)

    if q is None:
        q = limiting_ratios(member, max_level, t_end=t_end,
                            sign_prob=sign_prob)
    if isinstance(q, QExtraction):
        if not q.converged:
            raise UnconvergedError(
                "refusing exact evaluation: the supplied ratios are not "
                "converged (plateau {:.3g}, settle {:.3g}, truncation "
                "{:.3g})".format(q.plateau_error, q.settle_factor,
                                 q.truncation_error))
        q_vals = np.asarray(q.values, dtype=float)
    else:
        q_vals = np.asarray(q, dtype=float)
    if len(q_vals) <= max_level:
        raise InvalidParameterError(
            f"need ratios up to gcd level {max_level}, got {len(q_vals)}")

    num = 0.0
    den = 0.0
    rows = []
    for ks in profiles:
        weight = float(np.prod(q_vals[list(ks)]))
        pmf = profile_change_pmf(split, a, ks, unit)
        p_out = sum(p for delta, p in pmf.items() if delta > 0)
        num += weight * float(p_out)
        den += weight
        if keep_profiles:
            rows.append((ks, weight, p_out))

    if den <= 0.0:
        raise UnconvergedError("zero total profile weight")
    return NDResult(z=z, ratio=num / den, numerator=num, denominator=den,
                    unit=unit, units=Z, profile_count=len(profiles),
                    max_level=max_level, mode=mode, profiles=tuple(rows),
                    parity_locked=locked)
