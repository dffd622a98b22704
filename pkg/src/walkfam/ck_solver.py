"""Transient distribution and limiting state ratios of the workload chain.

One queue class is a continuous-time chain on the multiples of its batch
gcd: a rate-1 arrival either adds a batch (law r) or removes one with
reflection at zero (law rt), the sign carrying probability ``sign_prob``.
``integrate_ck`` advances p_n(t) on a truncated range with an explicit
adaptive scheme, tracking leaked mass, and also solves for the invariant
measure of the truncated chain.  The ratios p_n(t)/p_0(t) drift toward
that measure like exp(-n^2 / (2 sigma^2 t)), which is far from 1 even at
moderate horizons, so the limiting ratios are taken from the invariant
measure while the trajectory supplies conservation and convergence
diagnostics.  No stationary distribution exists (the chain has zero
drift); only the ratios are meaningful.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, exp, sqrt

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (InvalidParameterError, TruncationError, UnconvergedError,
                     UnsupportedModeError)
from .families import as_fraction, rational_gcd, split_signed

__all__ = [
    "LatticeSpec",
    "CkSolution",
    "QExtraction",
    "PropertyCheck",
    "gcd_of_support",
    "integrate_ck",
    "integrate_spec",
    "extract_q",
    "verify_property1",
    "verify_property2",
]

LEAK_TOL = 1e-6
CONSERVATION_TOL = 1e-9
PLATEAU_TOL = 1e-5
# Levels whose diffusive settling factor exp(-n^2 / (2 s^2 t)) is below
# this are not considered resolved by the trajectory at horizon t_end.
DIFFUSION_SETTLE_FRACTION = 0.5
_MAX_DOUBLINGS = 3


def gcd_of_support(b_values, bt_values):
    """gcd of the strictly positive batch sizes both signs can produce.

    Integer inputs give an int; rational inputs give a Fraction.
    """
    vals = [as_fraction(v) for v in b_values if v > 0]
    vals += [as_fraction(v) for v in bt_values if v > 0]
    if any(v < 0 for v in list(b_values) + list(bt_values)):
        raise InvalidParameterError("batch sizes cannot be negative")
    if not vals:
        raise InvalidParameterError("no positive batch sizes; gcd undefined")
    g = rational_gcd(vals)
    if g.denominator == 1 and all(as_fraction(v).denominator == 1
                                  for v in list(b_values) + list(bt_values)):
        return int(g)
    return g


def _unit_pmf(pmf, unit):
    out = {}
    for v, p in pmf.items():
        k = as_fraction(v) / unit
        if k.denominator != 1:
            raise InvalidParameterError(f"{v} is not a multiple of {unit}")
        out[int(k)] = out.get(int(k), Fraction(0)) + p
    return out


@dataclass(frozen=True)
class LatticeSpec:
    """One class's chain: batch pmfs in gcd units plus the sign weight."""

    unit: Fraction
    r: dict
    rt: dict
    sign_prob: Fraction = Fraction(1, 2)
    label: str = "chain"

    def __post_init__(self):
        if not (0 < self.sign_prob < 1):
            raise InvalidParameterError("sign_prob must lie in (0, 1)")
        if any(k < 0 for k in self.r) or sum(self.r.values()) != 1:
            raise InvalidParameterError("r must be a pmf on nonnegative units")
        if any(k < 1 for k in self.rt) or sum(self.rt.values()) != 1:
            raise InvalidParameterError("rt must be a pmf on positive units")

    @staticmethod
    def from_law(law, sign_prob=None, label="chain"):
        """Build from a lattice increment law via its signed split."""
        split = split_signed(law)
        support = split.positive_support()
        g = rational_gcd(support)
        if g == 0:
            raise InvalidParameterError("no positive batch sizes in law")
        sp = split.p_plus if sign_prob is None else as_fraction(sign_prob)
        return LatticeSpec(unit=g, r=_unit_pmf(split.b_pmf, g),
                           rt=_unit_pmf(split.bt_pmf, g), sign_prob=sp,
                           label=label)

    def sigma2(self):
        """Per-unit-time variance of the free displacement, in unit^2."""
        wp = float(self.sign_prob)
        m = wp * sum(k * float(p) for k, p in self.r.items()) \
            - (1 - wp) * sum(k * float(p) for k, p in self.rt.items())
        m2 = wp * sum(k * k * float(p) for k, p in self.r.items()) \
            + (1 - wp) * sum(k * k * float(p) for k, p in self.rt.items())
        return m2 - m * m

    def default_n_max(self, t_end):
        return max(50, ceil(10.0 * sqrt(max(t_end, 1.0) * max(self.sigma2(),
                                                              1e-12))))


def _kernel(spec, n_max, leaky):
    """One-arrival transition matrix on states 0..n_max (+ leak row).

    ``leaky`` adds an absorbing overflow state; otherwise overshoots are
    clipped to n_max, which keeps the kernel stochastic for the invariant
    measure solve.
    """
    size = n_max + 2 if leaky else n_max + 1
    K = np.zeros((size, size))
    wp = float(spec.sign_prob)
    states = np.arange(n_max + 1)
    for b, p in spec.r.items():
        dest = states + b
        w = wp * float(p)
        inside = dest <= n_max
        np.add.at(K, (dest[inside], states[inside]), w)
        if leaky:
            K[n_max + 1, states[~inside]] += w
        else:
            np.add.at(K, (np.full((~inside).sum(), n_max), states[~inside]), w)
    for bt, p in spec.rt.items():
        dest = np.abs(states - bt)
        w = (1 - wp) * float(p)
        inside = dest <= n_max
        np.add.at(K, (dest[inside], states[inside]), w)
        if leaky:
            K[n_max + 1, states[~inside]] += w
        else:
            np.add.at(K, (np.full((~inside).sum(), n_max), states[~inside]), w)
    if leaky:
        K[n_max + 1, n_max + 1] = 1.0
    return K


def _invariant_ratios(spec, n_max):
    """Invariant measure of the clipped chain, normalised to state 0."""
    K = _kernel(spec, n_max, leaky=False)
    A = K - np.eye(n_max + 1)
    A[0, :] = 0.0
    A[0, 0] = 1.0
    b = np.zeros(n_max + 1)
    b[0] = 1.0
    q = np.linalg.solve(A, b)
    if not np.all(np.isfinite(q)) or q.min() < -1e-9:
        raise UnconvergedError("invariant measure solve failed")
    return np.maximum(q, 0.0)


@dataclass
class CkSolution:
    """Trajectory plus extracted ratios for one chain."""

    spec: LatticeSpec
    n_max: int
    t_end: float
    times: np.ndarray
    p: np.ndarray               # (n_times, n_max + 1)
    leak: np.ndarray            # (n_times,)
    conservation_error: float
    q_final: np.ndarray         # p_n / p_0 at t_end
    q_limit: np.ndarray         # invariant-measure ratios
    truncation_error: float     # limit shift when re-solved at 0.8 n_max
    doublings: int = 0

    def plateau_error(self, levels=None):
        """Max relative drift of the finite-t ratios over the last 10%."""
        lv = self.reported_levels(levels)
        tail = self.times >= 0.9 * self.t_end
        with np.errstate(divide="ignore", invalid="ignore"):
            qs = self.p[tail][:, lv] / self.p[tail][:, [0]]
        ref = qs[-1]
        err = np.abs(qs - ref[None, :]) / np.maximum(np.abs(ref), 1e-300)
        return float(np.nanmax(err)) if err.size else float("nan")

    def settle_factor(self, level):
        """Diffusive factor exp(-n^2/(2 s^2 t)) at this level and t_end."""
        s2 = max(self.spec.sigma2(), 1e-12)
        return exp(-(level ** 2) / (2.0 * s2 * self.t_end))

    def reported_levels(self, levels=None):
        if levels is None:
            levels = min(self.n_max, 20)
        return np.arange(1, levels + 1)


def integrate_ck(r, rt, t_end, *, sign_prob=Fraction(1, 2), n_max=None,
                 unit=Fraction(1), **kw):
    """Integrate the chain's forward equations on a truncated range.

    ``r``/``rt`` are the batch pmfs in gcd units (r may put mass at 0; rt
    is strictly positive).  Leaked mass is tracked in an absorbing
    overflow state; if it exceeds the leak tolerance the range is doubled
    a few times before giving up with a suggestion.  Mass conservation
    would fail only through integrator error; the adaptive scheme
    preserves the linear invariant to roundoff, so p_0 decays like t^-1/2
    and cannot underflow at any feasible horizon (a zero p_0 still
    raises).
    """
    spec = LatticeSpec(unit=as_fraction(unit),
                       r={int(k): as_fraction(v) for k, v in r.items()},
                       rt={int(k): as_fraction(v) for k, v in rt.items()},
                       sign_prob=as_fraction(sign_prob))
    return integrate_spec(spec, t_end, n_max=n_max, **kw)


def integrate_spec(spec, t_end, *, n_max=None, rtol=1e-10, atol=1e-13,
                   n_out=81, auto_extend=True, leak_tol=LEAK_TOL):
    t_end = float(t_end)
    if t_end <= 0:
        raise InvalidParameterError("t_end must be positive")
    n = spec.default_n_max(t_end) if n_max is None else int(n_max)

    doublings = 0
    while True:
        G = _kernel(spec, n, leaky=True)
        np.fill_diagonal(G, G.diagonal() - 1.0)
        G[n + 1, n + 1] = 0.0
        # make the columns sum to zero exactly so the invariant is preserved
        G[n + 1, :] -= G.sum(axis=0)
        y0 = np.zeros(n + 2)
        y0[0] = 1.0
        times = np.linspace(0.0, t_end, n_out)
        sol = solve_ivp(lambda _, y: G @ y, (0.0, t_end), y0, method="DOP853",
                        t_eval=times, rtol=rtol, atol=atol)
        if not sol.success:
            raise UnconvergedError(f"integration failed: {sol.message}")
        p = sol.y[:-1, :].T
        leak = sol.y[-1, :]
        if leak[-1] <= leak_tol or not auto_extend or doublings >= _MAX_DOUBLINGS:
            break
        n *= 2
        doublings += 1

    if leak[-1] > leak_tol:
        raise TruncationError(
            f"leaked mass {leak[-1]:.3g} exceeds {leak_tol:g} at t_end={t_end}; "
            f"retry with n_max >= {2 * n}", suggested_n_max=2 * n)

    conservation = float(np.max(np.abs(p.sum(axis=1) + leak - 1.0)))
    p_end = p[-1]
    if p_end[0] <= 0.0:
        raise UnconvergedError("p_0 vanished at t_end; shorten the horizon")
    q_final = p_end / p_end[0]

    q_limit = _invariant_ratios(spec, n)
    n_small = max(10, int(0.8 * n))
    q_small = _invariant_ratios(spec, n_small)
    upto = min(len(q_limit), len(q_small), max(2, n // 2))
    trunc = float(np.max(np.abs(q_limit[:upto] - q_small[:upto])
                         / np.maximum(q_limit[:upto], 1e-300)))

    return CkSolution(spec=spec, n_max=n, t_end=t_end, times=times, p=p,
                      leak=leak, conservation_error=conservation,
                      q_final=q_final, q_limit=q_limit,
                      truncation_error=trunc, doublings=doublings)


@dataclass(frozen=True)
class QExtraction:
    """Limiting ratios with the diagnostics backing them."""

    values: np.ndarray          # q_0..q_levels, from the invariant measure
    final_ratios: np.ndarray    # same range, p_n(t_end)/p_0(t_end)
    plateau_error: float
    settle_factor: float
    truncation_error: float
    converged: bool
    levels: int

    def as_dict(self):
        return {
            "levels": self.levels,
            "values": [float(v) for v in self.values],
            "final_ratios": [float(v) for v in self.final_ratios],
            "plateau_error": self.plateau_error,
            "settle_factor": self.settle_factor,
            "truncation_error": self.truncation_error,
            "converged": self.converged,
        }


def extract_q(solution, levels=None, *, plateau_tol=PLATEAU_TOL):
    """Limiting ratios q_n for n = 0..levels, with convergence verdict.

    The values come from the invariant measure; ``converged`` additionally
    demands that the trajectory's horizon resolves the requested levels
    (diffusive settle factor at the top level at least
    ``DIFFUSION_SETTLE_FRACTION``) and that the truncated solve is stable.
    The raw final-time ratios and their plateau drift are reported for
    inspection; they approach the limit only like exp(-n^2/(2 s^2 t)).
    """
    if levels is None:
        levels = min(solution.n_max, 20)
    levels = int(levels)
    if levels >= solution.n_max:
        raise InvalidParameterError(
            f"levels {levels} not covered by n_max {solution.n_max}")
    values = solution.q_limit[:levels + 1].copy()
    finals = solution.q_final[:levels + 1].copy()
    plateau = solution.plateau_error(levels)
    settle = solution.settle_factor(levels)
    converged = (solution.leak[-1] <= LEAK_TOL
                 and solution.truncation_error < 1e-8
                 and settle >= DIFFUSION_SETTLE_FRACTION)
    return QExtraction(values=values, final_ratios=finals,
                       plateau_error=plateau, settle_factor=settle,
                       truncation_error=solution.truncation_error,
                       converged=converged, levels=levels)


# cross-coordinate and cross-member identities -------------------------------

@dataclass(frozen=True)
class PropertyCheck:
    """Result of a ratio-identity check across chains."""

    ok: bool
    max_deviation: float
    pmf_identity_ok: bool
    gcd_identity_ok: bool
    pairs: tuple
    diagnostics: dict = field(default_factory=dict)


def _member_specs(member, sign_prob=None):
    if not member.is_lattice:
        raise UnsupportedModeError("ratio identities need a lattice member")
    return [LatticeSpec.from_law(law, sign_prob=sign_prob,
                                 label=f"coord_{i + 1}")
            for i, law in enumerate(member.laws)]


def _q_table(spec, max_level, t_end, **kw):
    kw.setdefault("n_max", max(spec.default_n_max(t_end), 2 * max_level + 10))
    sol = integrate_spec(spec, t_end, **kw)
    ext = extract_q(sol, levels=max_level)
    return ext, sol


def verify_property1(family, a, max_level, *, t_end=500.0, sign_prob=None,
                     **kw):
    """Same-member identity: q at multiples of each coordinate's gcd agree.

    Also checks, exactly in rational arithmetic, that the coordinate batch
    pmfs coincide in gcd units and that a_j * gcd_i == a_i * gcd_j.
    """
    member = family.member(a) if hasattr(family, "member") else family
    specs = _member_specs(member, sign_prob)
    qs = [_q_table(s, max_level, t_end, **kw)[0] for s in specs]

    pmf_ok = all(s.r == specs[0].r and s.rt == specs[0].rt for s in specs)
    gcd_ok = True
    comps = member.a.components
    for i in range(len(specs)):
        for j in range(i + 1, len(specs)):
            if comps[j] * specs[i].unit != comps[i] * specs[j].unit:
                gcd_ok = False

    pairs = []
    worst = 0.0
    for i in range(len(qs)):
        for j in range(i + 1, len(qs)):
            dev = float(np.max(np.abs(qs[i].values - qs[j].values)))
            pairs.append((i, j, dev))
            worst = max(worst, dev)
    converged = all(q.converged for q in qs)
    return PropertyCheck(ok=(worst < 1e-6 and pmf_ok and gcd_ok and converged),
                         max_deviation=worst, pmf_identity_ok=pmf_ok,
                         gcd_identity_ok=gcd_ok, pairs=tuple(pairs),
                         diagnostics={"converged": converged,
                                      "plateau": [q.plateau_error for q in qs],
                                      "settle": [q.settle_factor for q in qs]})


def verify_property2(family, a1, a2, max_level, *, t_end=500.0,
                     sign_prob=None, **kw):
    """Cross-member identity: each coordinate's gcd-unit ratios agree
    between members a1 and a2 of the same family."""
    m1, m2 = family.member(a1), family.member(a2)
    s1, s2 = _member_specs(m1, sign_prob), _member_specs(m2, sign_prob)
    pairs = []
    worst = 0.0
    pmf_ok = True
    all_converged = True
    for i, (x, y) in enumerate(zip(s1, s2)):
        pmf_ok = pmf_ok and x.r == y.r and x.rt == y.rt
        qx = _q_table(x, max_level, t_end, **kw)[0]
        qy = _q_table(y, max_level, t_end, **kw)[0]
        dev = float(np.max(np.abs(qx.values - qy.values)))
        pairs.append((i, i, dev))
        worst = max(worst, dev)
        all_converged = all_converged and qx.converged and qy.converged
    return PropertyCheck(ok=(worst < 1e-6 and pmf_ok and all_converged),
                         max_deviation=worst, pmf_identity_ok=pmf_ok,
                         gcd_identity_ok=True, pairs=tuple(pairs),
                         diagnostics={"converged": all_converged})
