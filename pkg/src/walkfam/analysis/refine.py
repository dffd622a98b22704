"""Lattice refinements of a continuous base law.

Each refinement m places mass on multiples of span 2^-m * scale by
midpoint cdf differencing, then moves an exact sliver of mass between the
two extreme support points so the mean is exactly zero in rational
arithmetic.  A drift helper reruns the one-sided margin comparison on
each refinement with the same windows as the continuous run, so the two
are directly comparable.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import ceil, floor, isnan, hypot

from ..errors import InvalidParameterError, UnsupportedModeError
from ..families import BaseDistribution, ScaledFamily, as_fraction
from .estimates import default_window
from .weak import check_weak_semiconservative

__all__ = [
    "RefinementLevel",
    "RefinementResult",
    "MarginDriftReport",
    "refine_lattice",
    "refinement_margin_drift",
]

MAX_POINTS = 200_000


@dataclass(frozen=True)
class RefinementLevel:
    """One lattice approximation of the continuous base."""

    m: int
    span: Fraction
    distribution: BaseDistribution
    n_points: int
    variance: float
    variance_gap: float         # lattice variance minus continuous variance
    recenter_mass: float        # mass moved to zero the mean exactly

    def as_dict(self):
        return {"m": self.m, "span": float(self.span),
                "n_points": self.n_points, "variance": self.variance,
                "variance_gap": self.variance_gap,
                "recenter_mass": self.recenter_mass}


@dataclass(frozen=True)
class RefinementResult:
    base_label: str
    scale: float
    levels: tuple

    def distribution(self, m):
        for lev in self.levels:
            if lev.m == m:
                return lev.distribution
        raise KeyError(m)

    def as_dict(self):
        return {"base_label": self.base_label, "scale": self.scale,
                "levels": [lev.as_dict() for lev in self.levels]}


def _support_bounds(base, tail_mass):
    lo, hi = base.support
    if lo > -float("inf") and hi < float("inf"):
        return float(lo), float(hi)
    return float(base.ppf(tail_mass)), float(base.ppf(1.0 - tail_mass))


def refine_lattice(base, m_list, *, scale=1.0, tail_mass=1e-12,
                   max_points=MAX_POINTS):
    """Lattice approximations of a continuous zero-mean base.

    For each m the span is 2^-m * scale; the pmf collects the cdf mass of
    the half-open midpoint cells, is normalised exactly, and the mean is
    recentred to exact zero by shifting mass between the extreme points.
    Refuses spans that would need more than ``max_points`` states.
    """
    if base.is_lattice:
        raise UnsupportedModeError("refinement applies to continuous bases")
    scale_f = as_fraction(scale)
    if scale_f <= 0:
        raise InvalidParameterError("scale must be positive")
    lo, hi = _support_bounds(base, tail_mass)

    levels = []
    for m in sorted(set(int(m) for m in m_list)):
        if m < 0:
            raise InvalidParameterError("m must be nonnegative")
        span = scale_f / (2 ** m)
        alpha = float(span)
        k_lo = floor(lo / alpha) - 1
        k_hi = ceil(hi / alpha) + 1
        if k_hi - k_lo + 1 > max_points:
            raise InvalidParameterError(
                f"refinement m={m} needs {k_hi - k_lo + 1} points, over the "
                f"{max_points} budget; use a smaller m")
        pmf = {}
        for k in range(k_lo, k_hi + 1):
            mass = float(base.cdf((k + 0.5) * alpha)
                         - base.cdf((k - 0.5) * alpha))
            if mass > 0.0:
                pmf[span * k] = as_fraction(mass)
        if not pmf:
            raise InvalidParameterError("refinement produced an empty pmf")
        total = sum(pmf.values())
        if abs(float(total) - 1.0) > 1e-9:
            raise InvalidParameterError(
                f"cdf differencing lost mass: total {float(total)}")
        pmf = {v: p / total for v, p in pmf.items()}

        mean = sum(v * p for v, p in pmf.items())
        v_lo, v_hi = min(pmf), max(pmf)
        moved = Fraction(0)
        if mean != 0:
            if v_hi == v_lo:
                raise InvalidParameterError("cannot recentre a single atom")
            moved = mean / (v_hi - v_lo)
            src = v_hi if mean > 0 else v_lo
            dst = v_lo if mean > 0 else v_hi
            eps = abs(moved)
            if pmf[src] <= eps:
                raise InvalidParameterError(
                    "recentring would exhaust an extreme atom")
            pmf[src] -= eps
            pmf[dst] = pmf.get(dst, Fraction(0)) + eps

        dist = BaseDistribution.lattice(pmf, span=span,
                                        label=f"{base.label}~m{m}")
        var = dist.variance
        levels.append(RefinementLevel(
            m=m, span=span, distribution=dist, n_points=len(dist.pmf),
            variance=var, variance_gap=var - base.variance,
            recenter_mass=abs(float(moved))))
    return RefinementResult(base_label=base.label, scale=float(scale_f),
                            levels=tuple(levels))


@dataclass(frozen=True)
class MarginDriftReport:
    """Margins of the one-sided check across refinements vs continuous."""

    m_values: tuple
    z_grid: tuple
    rows: tuple                 # (m or "continuous", z, margin, sigma)
    max_drift_sigma: float      # worst |margin_m - margin_cont| in sigmas
    stable: bool
    reports: dict               # m (or "continuous") -> WeakSemiReport

    def as_dict(self):
        return {"m_values": list(self.m_values),
                "z_grid": [float(z) for z in self.z_grid],
                "rows": [list(r) for r in self.rows],
                "max_drift_sigma": self.max_drift_sigma,
                "stable": self.stable,
                "reports": {str(k): v.as_dict()
                            for k, v in self.reports.items()}}


def refinement_margin_drift(base, m_list, members, z_grid, *, scale=1.0,
                            sigma_mult=3.0, continuous_report=None,
                            **estimator_kw):
    """Run the Monte Carlo margin check on refinements and the continuous
    base with identical windows, and report the drift between them.

    ``estimator_kw`` is passed to check_weak_semiconservative (horizon,
    n_paths, seed, threads, ...).  The continuous run fixes the window
    per level; each lattice refinement reuses those windows, so the
    conditioning events are comparable.  Ties count one half by default:
    a refinement carries tie mass of order its span and the mass depends
    on the member scaling, so strict counting would shift lattice margins
    against the continuous ones at first order in the span.

    ``continuous_report`` lets the caller supply an already computed
    continuous-base report (same members, same z grid, windows from the
    default policy) instead of rerunning it here.
    """
    estimator_kw.setdefault("ties", "half")
    dimension = len(members[0])
    family_c = ScaledFamily(base=base, dimension=dimension)
    windows = {float(z): default_window(family_c.reference(), z)
               for z in z_grid}

    if continuous_report is not None:
        got = sorted(float(z) for z in continuous_report.z_grid)
        if got != sorted(windows):
            raise InvalidParameterError(
                "continuous_report was computed on a different z grid")
        reports = {"continuous": continuous_report}
    else:
        reports = {"continuous": check_weak_semiconservative(
            family_c, members, z_grid, method="monte-carlo", window=windows,
            sigma_mult=sigma_mult, extend=False, **estimator_kw)}
    refined = refine_lattice(base, m_list, scale=scale)
    for lev in refined.levels:
        fam = ScaledFamily(base=lev.distribution, dimension=dimension)
        reports[lev.m] = check_weak_semiconservative(
            fam, members, z_grid, method="monte-carlo", window=windows,
            sigma_mult=sigma_mult, extend=False, **estimator_kw)

    def margin_map(report):
        out = {}
        for comp in report.members:
            if comp.is_reference:
                continue
            key = comp.a
            for pt in comp.margins:
                out[(key, pt.z)] = (pt.margin, pt.sigma)
        return out

    cont = margin_map(reports["continuous"])
    rows = [("continuous", z, m, s) for (_, z), (m, s) in sorted(cont.items())]
    worst = 0.0
    for lev in refined.levels:
        ref_m = margin_map(reports[lev.m])
        for key, (mar, sig) in sorted(ref_m.items()):
            rows.append((lev.m, key[1], mar, sig))
            if key in cont:
                c_mar, c_sig = cont[key]
                combined = hypot(sig, c_sig)
                if not isnan(mar) and not isnan(c_mar) and combined > 0:
                    worst = max(worst, abs(mar - c_mar) / combined)
    return MarginDriftReport(
        m_values=tuple(lev.m for lev in refined.levels),
        z_grid=tuple(float(z) for z in z_grid), rows=tuple(rows),
        max_drift_sigma=worst, stable=worst <= sigma_mult,
        reports=reports)
