"""One-sided comparison of conditional outward probabilities across a family.

For each member the report carries the per-level margin against the
reference (all-ones) member, the smallest level z_star beyond which the
margin keeps one sign, and a verdict.  The expected direction puts the
reference on the smaller side.  Exact mode evaluates margins by
enumeration; Monte Carlo mode calls the windowed estimator and treats a
margin as signed only beyond a significance multiple of its combined
standard error.  If the sign has not stabilised by the end of the grid,
the grid is extended once before declaring the result inconclusive.
"""

import math
from dataclasses import dataclass, field

from ..errors import (CostLimitError, InvalidParameterError,
                      UnreachableLevelError, UnsupportedModeError)
from ..families import FamilyParameter, as_fraction
from ..rng import BATCH_SIZE, derive_seed
from .estimates import conditional_outward_grid
from .exact import exact_nd, limiting_ratios

__all__ = [
    "MarginPoint",
    "MemberComparison",
    "WeakSemiReport",
    "check_weak_semiconservative",
]

EXACT_SIGN_TOL = 1e-11


@dataclass(frozen=True)
class MarginPoint:
    """Margin member - reference at one level."""

    z: float
    member_value: float
    reference_value: float
    margin: float
    sigma: float                # combined stderr; 0 in exact mode
    sign: int                   # +1, -1, or 0 (not significant / tied)
    member_events: int = 0
    reference_events: int = 0

    def as_dict(self):
        return {"z": self.z, "member_value": self.member_value,
                "reference_value": self.reference_value,
                "margin": self.margin, "sigma": self.sigma,
                "sign": self.sign, "member_events": self.member_events,
                "reference_events": self.reference_events}


@dataclass(frozen=True)
class MemberComparison:
    """Scan result for one member against the reference."""

    a: tuple                    # component strings
    is_reference: bool
    margins: tuple              # MarginPoint rows, ascending z
    unreachable: tuple          # grid levels this member cannot occupy
    z_star: float
    direction: str              # reference_below | reference_above | tied | undetermined
    verdict: str                # PASS | FAIL | INCONCLUSIVE
    n_significant: int

    def as_dict(self):
        return {"a": list(self.a), "is_reference": self.is_reference,
                "margins": [m.as_dict() for m in self.margins],
                "unreachable": [float(z) for z in self.unreachable],
                "z_star": self.z_star, "direction": self.direction,
                "verdict": self.verdict,
                "n_significant": self.n_significant}


@dataclass(frozen=True)
class WeakSemiReport:
    """Family-level verdict with per-member scans."""

    method: str
    z_grid: tuple
    members: tuple              # reference first
    verdict: str
    direction: str
    extended: bool
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        return {"method": self.method,
                "z_grid": [float(z) for z in self.z_grid],
                "members": [m.as_dict() for m in self.members],
                "verdict": self.verdict, "direction": self.direction,
                "extended": self.extended,
                "diagnostics": dict(self.diagnostics)}


def _direction_label(sign):
    if sign > 0:
        return "reference_below"
    if sign < 0:
        return "reference_above"
    return "tied"


def _scan_member(a_strs, is_reference, margins, unreachable, first_z):
    """Right-to-left sign scan: direction and the level it holds from."""
    margins = tuple(sorted(margins, key=lambda m: m.z))
    signs = [m.sign for m in margins]
    nonzero = [s for s in signs if s != 0]
    n_sig = 0
    if not nonzero:
        z_star = margins[0].z if margins else first_z
        direction = "tied" if is_reference or margins else "undetermined"
        verdict = "PASS" if is_reference else "INCONCLUSIVE"
        if is_reference:
            z_star = first_z
        return MemberComparison(a=a_strs, is_reference=is_reference,
                                margins=margins, unreachable=unreachable,
                                z_star=z_star, direction=direction,
                                verdict=verdict, n_significant=0)
    last_sign = nonzero[-1]
    n_sig = sum(1 for s in signs if s == last_sign)
    z_star = margins[0].z
    for i in reversed(range(len(margins))):
        if signs[i] == -last_sign:
            z_star = margins[i + 1].z
            break
    direction = _direction_label(last_sign)
    verdict = "PASS" if last_sign > 0 else "FAIL"
    return MemberComparison(a=a_strs, is_reference=is_reference,
                            margins=margins, unreachable=unreachable,
                            z_star=z_star, direction=direction,
                            verdict=verdict, n_significant=n_sig)


def _needs_extension(comp, last_z):
    if comp.is_reference:
        return False
    if comp.direction in ("tied", "undetermined"):
        return True
    if comp.verdict == "FAIL":
        return False
    # sign settled only at the end of the grid: too little tail evidence
    tail = [m for m in comp.margins if m.z >= comp.z_star]
    return len(tail) < 2 or comp.z_star >= last_z


def _extend_grid(z_grid, factor=0.5):
    zs = sorted(float(z) for z in z_grid)
    spacing = zs[-1] - zs[-2] if len(zs) >= 2 else zs[-1]
    n_new = max(2, int(math.ceil(len(zs) * factor)))
    return [zs[-1] + spacing * (k + 1) for k in range(n_new)]


def _exact_values(member, z_list, q, cost_limited):
    values = {}
    unreachable = []
    for z in z_list:
        try:
            values[z] = exact_nd(member, z, q).ratio
        except UnreachableLevelError:
            unreachable.append(z)
        except CostLimitError:
            cost_limited.append(z)
    return values, unreachable


def _mc_values(member, z_list, *, horizon, n_paths, seed, window, count_from,
               ties, threads, batch_size):
    ests = conditional_outward_grid(member, z_list, horizon=horizon,
                                    n_paths=n_paths, seed=seed, window=window,
                                    count_from=count_from, ties=ties,
                                    threads=threads, batch_size=batch_size)
    values = {}
    unreachable = []
    for z, est in zip(z_list, ests):
        if not est.reachable or est.events == 0 or math.isnan(est.value):
            unreachable.append(z)
        else:
            values[z] = est
    return values, unreachable


def check_weak_semiconservative(family, members, z_grid, method="exact", *,
                                horizon=2000, n_paths=100_000, seed=0,
                                window="auto", count_from=None, ties="strict",
                                threads=1, t_end=500.0, sign_prob=None,
                                sigma_mult=3.0, extend=True,
                                batch_size=BATCH_SIZE):
    """Compare members' limiting outward probabilities against the reference.

    ``members`` lists the scaling vectors to test; the all-ones reference
    is prepended when missing.  ``method`` is "exact" (lattice
    enumeration) or "monte-carlo".  Levels a member cannot occupy are
    reported per member and skipped.  The verdict is PASS only when every
    member keeps the reference on the smaller side beyond its own z_star.
    """
    if method not in ("exact", "monte-carlo"):
        raise InvalidParameterError(f"unknown method {method!r}")
    z_grid = sorted(float(z) for z in z_grid)
    if not z_grid or z_grid[0] <= 0:
        raise InvalidParameterError("z_grid must hold positive levels")

    params = []
    for a in members:
        p = a if isinstance(a, FamilyParameter) else FamilyParameter(a)
        if p.dimension != family.dimension:
            raise InvalidParameterError("member dimension mismatch")
        params.append(p)
    if not any(p.is_reference for p in params):
        params.insert(0, FamilyParameter.ones(family.dimension))
    else:
        params.sort(key=lambda p: not p.is_reference)

    exact = method == "exact"
    if exact and not family.base.is_lattice:
        raise UnsupportedModeError("exact mode needs a lattice base")

    q = None
    if exact:
        from ..families import rational_gcd, split_signed
        g = rational_gcd(split_signed(family.base).positive_support())
        min_a = min(min(p.components) for p in params)
        # solve the ratios once, deep enough for the extended grid too
        deepest = _extend_grid(z_grid)[-1] if extend else z_grid[-1]
        k_bound = int(as_fraction(deepest) / g / min_a) + 2
        q = limiting_ratios(family.reference(), k_bound, t_end=t_end,
                            sign_prob=sign_prob)

    cost_limited = []

    def evaluate(param, z_list, run_key):
        member = family.member(param)
        if exact:
            return _exact_values(member, z_list, q, cost_limited)
        return _mc_values(member, z_list, horizon=horizon, n_paths=n_paths,
                          seed=derive_seed(seed, run_key[0], run_key[1]),
                          window=window, count_from=count_from, ties=ties,
                          threads=threads, batch_size=batch_size)

    values = {}
    unreach = {}
    for idx, p in enumerate(params):
        values[idx], unreach[idx] = evaluate(p, z_grid, (idx, 0))

    def build_margins(idx):
        rows = []
        ref_vals = values[0]
        for z in sorted(values[idx]):
            if z not in ref_vals:
                continue
            if exact:
                mv, rv = values[idx][z], ref_vals[z]
                sig = 0.0
                me = re = 0
            else:
                em, er = values[idx][z], ref_vals[z]
                mv, rv = em.value, er.value
                sig = math.hypot(em.stderr, er.stderr)
                me, re = em.events, er.events
            margin = mv - rv
            if exact:
                sign = 0 if abs(margin) <= EXACT_SIGN_TOL else \
                    (1 if margin > 0 else -1)
            else:
                sign = 0 if abs(margin) <= sigma_mult * sig else \
                    (1 if margin > 0 else -1)
            rows.append(MarginPoint(z=z, member_value=mv, reference_value=rv,
                                    margin=margin, sigma=sig, sign=sign,
                                    member_events=me, reference_events=re))
        return rows

    def build_report(extended_flag):
        comps = []
        for idx, p in enumerate(params):
            a_strs = tuple(str(c) for c in p.components)
            comps.append(_scan_member(a_strs, p.is_reference,
                                      build_margins(idx),
                                      tuple(unreach[idx]), z_grid[0]))
        others = [c for c in comps if not c.is_reference]
        if any(c.verdict == "FAIL" for c in others):
            verdict = "FAIL"
        elif any(c.verdict == "INCONCLUSIVE" for c in others) or not others:
            verdict = "INCONCLUSIVE"
        else:
            verdict = "PASS"
        dirs = {c.direction for c in others} - {"tied"}
        direction = dirs.pop() if len(dirs) == 1 else \
            ("tied" if not dirs else "mixed")
        return comps, verdict, direction

    comps, verdict, direction = build_report(False)
    extended = False
    if extend and any(_needs_extension(c, z_grid[-1]) for c in comps):
        new_z = _extend_grid(z_grid)
        for idx, p in enumerate(params):
            v, u = evaluate(p, new_z, (idx, 1))
            values[idx].update(v)
            unreach[idx] = list(unreach[idx]) + u
        z_grid = z_grid + new_z
        extended = True
        comps, verdict, direction = build_report(True)

    diagnostics = {"sigma_mult": sigma_mult if not exact else None,
                   "exact_sign_tol": EXACT_SIGN_TOL if exact else None,
                   "n_members": len(params) - 1,
                   "cost_limited_levels": sorted(set(cost_limited))}
    return WeakSemiReport(method=method, z_grid=tuple(z_grid),
                          members=tuple(comps), verdict=verdict,
                          direction=direction, extended=extended,
                          diagnostics=diagnostics)
