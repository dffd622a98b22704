"""Monte Carlo estimators for conditional outward steps and growth indices.

The conditional estimators condition on the walk's norm sitting at (or
near) a level inside a late time window and measure how often the next
step strictly increases the norm.  Visits from one path are correlated,
so standard errors use the per-path cluster (ratio estimator) form rather
than the naive binomial one.

The index estimators measure the limit of (up/down)^n along levels:
log of the per-level up/down ratio times the level, extrapolated in 1/n.
Levels are only counted once the elapsed time exceeds a diffusive
settling multiple of level^2, which removes the early-time inward bias.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import (InvalidParameterError, UnconvergedError,
                      UnsupportedModeError)
from ..families import KlebanerFamily, ScaledMember, SymmetricFamily
from ..rng import BATCH_SIZE, derive_seed
from ..walker import (LatticeStepper, SymmetricStepper, _map_batches,
                      make_stepper, record_hittings)

__all__ = [
    "ConditionalEstimate",
    "LadderResult",
    "HittingConditional",
    "IndexEstimate",
    "estimate_conditional_outward",
    "conditional_outward_grid",
    "conditional_outward_ladder",
    "estimate_hitting_conditional",
    "estimate_index",
    "level_updown_counts",
]

# Levels are counted only after LEVEL_GATE * level^2 steps, the diffusive
# time scale at which the occupancy near that level has settled.
LEVEL_GATE = 2.0


@dataclass(frozen=True)
class ConditionalEstimate:
    """Estimated probability of an outward step given the norm level."""

    z: float
    value: float
    stderr: float
    events: int
    outward: int
    method: str
    horizon: int
    n_paths: int
    window: float = None        # None means exact lattice matching
    reachable: bool = True
    detail: dict = None         # per-window values for debiased estimates

    def as_dict(self):
        d = {"z": self.z, "value": self.value, "stderr": self.stderr,
             "events": self.events, "outward": self.outward,
             "method": self.method, "horizon": self.horizon,
             "n_paths": self.n_paths, "window": self.window,
             "reachable": self.reachable}
        if self.detail is not None:
            d["detail"] = dict(self.detail)
        return d


def default_window(member, z):
    """Half-width for continuous conditioning: relative floor plus a step-
    scale floor so thin windows do not starve the estimator."""
    return max(0.01 * float(z), 0.05 * math.sqrt(member.base.variance))


def _resolve_windows(member, z_values, window, lattice):
    if lattice and window in (None, "auto"):
        return [None] * len(z_values)
    if window == "auto" or window is None:
        return [default_window(member, z) for z in z_values]
    if isinstance(window, dict):
        return [float(window[z]) for z in z_values]
    return [float(window)] * len(z_values)


def conditional_outward_grid(member, z_values, *, horizon, n_paths, seed,
                             window="auto", count_from=None, debias=False,
                             ties="strict", threads=1, batch_size=BATCH_SIZE):
    """Estimate P{norm strictly increases | norm at z} for each z.

    States inside the window [count_from, horizon) condition the estimate;
    ``count_from`` defaults to half the horizon.  Lattice members match
    levels exactly by default (off-lattice z comes back flagged
    unreachable); continuous members use a half-width window, "auto" for
    the default policy.  Passing an explicit window forces windowed
    conditioning even on a lattice member, which makes refined-lattice
    runs directly comparable to continuous ones.  Standard errors are
    cluster-robust over paths.

    ``ties`` decides how a step that leaves the norm unchanged counts:
    "strict" counts it as not outward (the lattice-theory convention),
    "half" counts it one half.  A lattice walk carries tie mass of order
    the span, and the mass depends on the coordinate scaling, so strict
    counting pollutes comparisons against a continuous law (which has no
    ties) at first order in the span; half counting cancels that term.

    At any fixed horizon the occupancy weights across same-norm states
    still carry a transient that is linear in 1/t, which biases the plain
    estimate at deep levels.  With ``debias`` the run also conditions on
    an earlier window [count_from/2, count_from) and combines the two
    window estimates with weights from the measured mean inverse event
    times, cancelling the 1/t term.  The combined stderr includes the
    cross-window covariance, so it is a few times the plain one.
    """
    z_values = list(z_values)
    horizon = int(horizon)
    if horizon < 2:
        raise InvalidParameterError("horizon must be at least 2")
    start_t = horizon // 2 if count_from is None else int(count_from)
    if not 0 <= start_t < horizon:
        raise InvalidParameterError("count_from must lie inside the horizon")
    start_lo = start_t // 2 if debias else start_t
    if debias and start_lo < 1:
        raise InvalidParameterError("debias needs count_from >= 2")
    if ties not in ("strict", "half"):
        raise InvalidParameterError("ties must be 'strict' or 'half'")
    half_ties = ties == "half"

    stepper = make_stepper(member)
    integer = isinstance(stepper, (LatticeStepper, SymmetricStepper))
    widths = _resolve_windows(member, z_values, window, integer)
    unit_scale = float(stepper.unit) if isinstance(stepper, LatticeStepper) \
        else 1.0

    targets = []
    reachable = []
    for z, w in zip(z_values, widths):
        if not integer or w is not None:
            targets.append(float(z))
            reachable.append(True)
            continue
        try:
            u = stepper.units(z) if isinstance(stepper, LatticeStepper) \
                else int(z)
            ok = u > 0
        except InvalidParameterError:
            u, ok = -1, False
        targets.append(u)
        reachable.append(ok)

    d = member.dimension
    dtype = np.int64 if integer else np.float64
    nz = len(z_values)
    any_window = any(w is not None for w in widths)
    n_win = 2 if debias else 1

    def worker(start, stop, rng):
        n = stop - start
        pos = np.zeros((n, d), dtype=dtype)
        nrm = np.zeros(n, dtype=dtype)
        ev = np.zeros((n_win, nz, n), dtype=np.int32)
        out = np.zeros((n_win, nz, n),
                       dtype=np.float32 if half_ties else np.int32)
        inv = np.zeros((n_win, nz))
        for t in range(1, horizon + 1):
            pos += stepper.draw(rng, n)
            new_nrm = np.abs(pos).sum(axis=1)
            w_idx = n_win - 1 if t - 1 >= start_t else \
                (0 if t - 1 >= start_lo else -1)
            if w_idx >= 0:
                real_nrm = nrm * unit_scale if (integer and any_window) \
                    else nrm
                up = new_nrm > nrm
                if half_ties:
                    up_w = up.astype(np.float32)
                    up_w += 0.5 * (new_nrm == nrm)
                for i in range(nz):
                    if not reachable[i]:
                        continue
                    if widths[i] is None:
                        mask = nrm == targets[i]
                    else:
                        mask = np.abs(real_nrm - targets[i]) <= widths[i]
                    cnt = int(np.count_nonzero(mask))
                    if cnt:
                        ev[w_idx, i] += mask
                        if half_ties:
                            out[w_idx, i] += mask * up_w
                        else:
                            out[w_idx, i] += mask & up
                        inv[w_idx, i] += cnt / (t - 1) if t > 1 else 0.0
            nrm = new_nrm
        ev = ev.astype(np.float64)
        out = out.astype(np.float64)
        sums = (ev.sum(axis=2), out.sum(axis=2), (ev * ev).sum(axis=2),
                (out * out).sum(axis=2), (ev * out).sum(axis=2), inv)
        if not debias:
            return sums
        cross = ((ev[0] * ev[1]).sum(axis=1), (out[0] * out[1]).sum(axis=1),
                 (out[0] * ev[1]).sum(axis=1), (ev[0] * out[1]).sum(axis=1))
        return sums + cross

    parts = _map_batches(worker, seed, n_paths, threads, batch_size)
    e_sum, o_sum, e2, o2, eo, inv = (sum(p[k] for p in parts)
                                     for k in range(6))
    if debias:
        c_ee, c_oo, c_oe, c_eo = (sum(p[k] for p in parts)
                                  for k in range(6, 10))

    method = "mc-debiased" if debias else "monte-carlo"
    results = []
    for i, z in enumerate(z_values):
        events = int(e_sum[:, i].sum())
        outward = o_sum[:, i].sum()
        outward = float(outward) if half_ties else int(outward)
        if not reachable[i] or e_sum[-1, i] == 0 or \
                (debias and e_sum[0, i] == 0):
            results.append(ConditionalEstimate(
                z=float(z), value=float("nan"), stderr=float("nan"),
                events=events, outward=outward, method=method,
                horizon=horizon, n_paths=n_paths, window=widths[i],
                reachable=bool(reachable[i])))
            continue
        p_w = o_sum[:, i] / e_sum[:, i]
        var_w = [(o2[w, i] - 2 * p_w[w] * eo[w, i]
                  + p_w[w] ** 2 * e2[w, i]) / e_sum[w, i] ** 2
                 for w in range(n_win)]
        if not debias:
            results.append(ConditionalEstimate(
                z=float(z), value=float(p_w[0]),
                stderr=float(math.sqrt(max(var_w[0], 0.0))),
                events=events, outward=outward, method=method,
                horizon=horizon, n_paths=n_paths, window=widths[i],
                reachable=True))
            continue
        u1, u2 = inv[0, i] / e_sum[0, i], inv[1, i] / e_sum[1, i]
        if u1 <= u2:
            raise UnconvergedError(
                f"window inverse-time weights did not separate at z={z}")
        w2 = u1 / (u1 - u2)
        w1 = u2 / (u1 - u2)
        value = w2 * p_w[1] - w1 * p_w[0]
        cov = (c_oo[i] - p_w[0] * c_eo[i] - p_w[1] * c_oe[i]
               + p_w[0] * p_w[1] * c_ee[i]) / (e_sum[0, i] * e_sum[1, i])
        var = w2 ** 2 * var_w[1] + w1 ** 2 * var_w[0] - 2 * w1 * w2 * cov
        results.append(ConditionalEstimate(
            z=float(z), value=float(value),
            stderr=float(math.sqrt(max(var, 0.0))),
            events=events, outward=outward, method=method,
            horizon=horizon, n_paths=n_paths, window=widths[i],
            reachable=True,
            detail={"early_value": float(p_w[0]),
                    "late_value": float(p_w[1]),
                    "early_events": int(e_sum[0, i]),
                    "late_events": int(e_sum[1, i]),
                    "inv_time_ratio": float(u1 / u2)}))
    return results


def estimate_conditional_outward(member, z, **kw):
    """Single-level convenience wrapper around the grid estimator."""
    return conditional_outward_grid(member, [z], **kw)[0]


@dataclass(frozen=True)
class LadderResult:
    """Grid estimates at a doubling sequence of horizons."""

    horizons: tuple
    by_horizon: dict
    max_shift_sigma: float      # largest rung-to-rung shift in sigma units
    stable: bool


def conditional_outward_ladder(member, z_values, *, horizon, n_paths, seed,
                               rungs=3, stability_sigma=3.0, **kw):
    """Run the grid estimator at horizons T, 2T, ... as a limit proxy.

    ``stable`` reports whether consecutive rungs agree within
    ``stability_sigma`` combined standard errors at every level.
    """
    horizons = tuple(int(horizon) << r for r in range(int(rungs)))
    by_h = {}
    for r, h in enumerate(horizons):
        by_h[h] = conditional_outward_grid(
            member, z_values, horizon=h, n_paths=n_paths,
            seed=derive_seed(seed, r), **kw)
    worst = 0.0
    for lo, hi in zip(horizons, horizons[1:]):
        for a, b in zip(by_h[lo], by_h[hi]):
            if math.isnan(a.value) or math.isnan(b.value):
                continue
            sig = math.hypot(a.stderr, b.stderr)
            if sig > 0:
                worst = max(worst, abs(a.value - b.value) / sig)
    return LadderResult(horizons=horizons, by_horizon=by_h,
                        max_shift_sigma=worst,
                        stable=worst <= stability_sigma)


@dataclass(frozen=True)
class HittingConditional:
    """Outward-step frequency at successive visits to a level."""

    level: float
    per_visit: tuple            # rows (j, visits, outward fraction)
    pooled_value: float
    pooled_stderr: float
    pooled_visits: int
    j_min: int
    insufficient: bool
    n_paths: int
    horizon: int

    def as_dict(self):
        return {"level": self.level,
                "per_visit": [list(r) for r in self.per_visit],
                "pooled_value": self.pooled_value,
                "pooled_stderr": self.pooled_stderr,
                "pooled_visits": self.pooled_visits,
                "j_min": self.j_min,
                "insufficient": self.insufficient,
                "n_paths": self.n_paths, "horizon": self.horizon}


def estimate_hitting_conditional(member, level, *, horizon, n_paths, seed,
                                 window=None, j_min=None, min_count=100,
                                 min_visits=200, reflected=False, threads=1):
    """Visit-indexed conditional outward estimate at one level.

    Reports the outward fraction at the j-th visit for each j with enough
    paths, then pools visits with index >= j_min (default: half the
    largest well-supported j) as the late-visit limit proxy.  A level the
    paths never reach comes back empty with ``insufficient`` set.
    """
    recs = record_hittings(member, level, horizon, n_paths, seed,
                           window=window, reflected=reflected,
                           threads=threads)
    table = recs.per_visit_table()
    supported = [j for j, cnt, _ in table if cnt >= min_count]
    if j_min is None:
        j_min = max(1, (max(supported) if supported else 1) // 2)
    pooled_up = 0
    pooled_n = 0
    for r in recs.records:
        tail = r.outward[j_min - 1:]
        pooled_up += int(tail.sum())
        pooled_n += len(tail)
    if pooled_n > 0:
        value = pooled_up / pooled_n
        stderr = math.sqrt(max(value * (1 - value), 1e-12) / pooled_n)
    else:
        value = float("nan")
        stderr = float("nan")
    return HittingConditional(
        level=float(level), per_visit=tuple(table), pooled_value=value,
        pooled_stderr=stderr, pooled_visits=pooled_n, j_min=int(j_min),
        insufficient=pooled_n < min_visits, n_paths=n_paths, horizon=horizon)


# growth index ---------------------------------------------------------------

@dataclass(frozen=True)
class IndexEstimate:
    """Estimate of the log-limit of the n-th power of the up/down ratio."""

    psi: float
    stderr: float
    mode: str
    per_level: tuple            # rows (n, up, down, psi_n, se_n)
    excluded: tuple             # levels dropped and why
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        return {"psi": self.psi, "stderr": self.stderr, "mode": self.mode,
                "per_level": [list(r) for r in self.per_level],
                "excluded": [list(r) for r in self.excluded],
                "diagnostics": dict(self.diagnostics)}


def _updown_exact_1d(member, n):
    """Exact one-step up/down probabilities at |position| = n gcd units."""
    stepper = LatticeStepper(member)
    unit = stepper.unit
    pmf = member.laws[0].lattice_pmf()
    level = n * unit
    up = sum(p for v, p in pmf.items() if v > 0 or v < -2 * level)
    down = sum(p for v, p in pmf.items() if -2 * level < v < 0)
    return float(up), float(down)


def level_updown_counts(walk, *, horizon, n_paths, seed, max_level,
                        burn_in=None, level_gate=LEVEL_GATE, threads=1,
                        batch_size=BATCH_SIZE):
    """Pooled per-level up/total transition counts from simulated paths.

    Supports the decaying-drift level walk, the symmetric lattice walk,
    and one-dimensional lattice members.  Level n is only counted at
    times past level_gate * n^2 (and past ``burn_in``).
    """
    horizon = int(horizon)
    max_level = int(max_level)
    burn = horizon // 5 if burn_in is None else int(burn_in)

    if isinstance(walk, KlebanerFamily):
        cap = horizon + 1
        table = walk.up_probabilities(cap)

        def worker(start, stop, rng):
            n = stop - start
            state = np.zeros(n, dtype=np.int64)
            up_c = np.zeros(max_level + 1, dtype=np.int64)
            tot_c = np.zeros(max_level + 1, dtype=np.int64)
            for t in range(horizon):
                goes_up = rng.random(n) < table[state]
                if t >= burn:
                    gate = min(max_level, int(math.sqrt(t / level_gate))) \
                        if level_gate > 0 else max_level
                    small = state <= gate
                    tot_c[:gate + 1] += np.bincount(
                        state[small], minlength=gate + 1)[:gate + 1]
                    up_c[:gate + 1] += np.bincount(
                        state[small & goes_up], minlength=gate + 1)[:gate + 1]
                state = np.where(goes_up, state + 1, state - 1)
            return up_c, tot_c

    elif isinstance(walk, (SymmetricFamily, ScaledMember)):
        if isinstance(walk, ScaledMember):
            if not walk.is_lattice or walk.dimension != 1:
                raise UnsupportedModeError(
                    "level counts support one-dimensional lattice members")
        stepper = make_stepper(walk)
        d = walk.dimension

        def worker(start, stop, rng):
            n = stop - start
            pos = np.zeros((n, d), dtype=np.int64)
            nrm = np.zeros(n, dtype=np.int64)
            up_c = np.zeros(max_level + 1, dtype=np.int64)
            tot_c = np.zeros(max_level + 1, dtype=np.int64)
            for t in range(horizon):
                pos += stepper.draw(rng, n)
                new_nrm = np.abs(pos).sum(axis=1)
                if t >= burn:
                    gate = min(max_level, int(math.sqrt(t / level_gate))) \
                        if level_gate > 0 else max_level
                    small = nrm <= gate
                    tot_c[:gate + 1] += np.bincount(
                        nrm[small], minlength=gate + 1)[:gate + 1]
                    up_c[:gate + 1] += np.bincount(
                        nrm[small & (new_nrm > nrm)],
                        minlength=gate + 1)[:gate + 1]
                nrm = new_nrm
            return up_c, tot_c

    else:
        raise UnsupportedModeError(
            f"no level-count engine for {type(walk).__name__}")

    parts = _map_batches(worker, seed, n_paths, threads, batch_size)
    up = sum(p[0] for p in parts)
    tot = sum(p[1] for p in parts)
    return up, tot


def _fit_psi(rows):
    """Weighted least squares of psi_n against 1/n; returns intercept."""
    ns = np.array([r[0] for r in rows], dtype=float)
    ys = np.array([r[3] for r in rows], dtype=float)
    ses = np.array([max(r[4], 1e-12) for r in rows], dtype=float)
    if len(rows) == 1:
        return float(ys[0]), float(ses[0]), 0.0
    X = np.column_stack([np.ones_like(ns), 1.0 / ns])
    W = 1.0 / ses ** 2
    XtW = X.T * W
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ ys)
    return float(beta[0]), float(math.sqrt(max(cov[0, 0], 0.0))), float(beta[1])


def estimate_index(walk, *, mode="auto", levels=None, horizon=2000,
                   n_paths=20000, seed=0, min_events=1000, burn_in=None,
                   n_formula=1_000_000, threads=1, batch_size=BATCH_SIZE):
    """Estimate the growth index psi = lim n * log(up_n / down_n).

    Formula mode evaluates the known one-step probabilities exactly
    (decaying-drift walks and one-dimensional lattice members have them);
    the symmetric walk in dimension >= 2 is not level-homogeneous, so it
    simulates.  Monte Carlo mode pools per-level transition counts and
    extrapolates the level estimates in 1/n.
    """
    level_homogeneous = (isinstance(walk, KlebanerFamily)
                         or (isinstance(walk, ScaledMember)
                             and walk.dimension == 1 and walk.is_lattice)
                         or (isinstance(walk, SymmetricFamily)
                             and walk.dimension == 1))
    if mode == "auto":
        mode = "formula" if level_homogeneous else "mc"

    if mode == "formula":
        if isinstance(walk, KlebanerFamily):
            def ratio_at(n):
                p = walk.up_probability(n)
                return p, 1.0 - p
        elif isinstance(walk, SymmetricFamily) and walk.dimension == 1:
            def ratio_at(n):
                return 0.5, 0.5
        elif isinstance(walk, ScaledMember) and walk.dimension == 1 \
                and walk.is_lattice:
            def ratio_at(n):
                return _updown_exact_1d(walk, n)
        else:
            raise UnsupportedModeError(
                "formula mode needs level-homogeneous one-step probabilities")
        grid = [n_formula // 4, n_formula // 2, n_formula] if levels is None \
            else sorted(int(n) for n in levels)
        rows = []
        excluded = []
        for n in grid:
            up, down = ratio_at(int(n))
            if down <= 0 or up <= 0:
                excluded.append((int(n), "one-sided"))
                continue
            rows.append((int(n), up, down, n * math.log(up / down), 0.0))
        if not rows:
            raise InvalidParameterError("no usable levels in formula mode")
        psi = rows[-1][3]
        drift = abs(rows[-1][3] - rows[0][3]) if len(rows) > 1 else 0.0
        return IndexEstimate(psi=psi, stderr=0.0, mode="formula",
                             per_level=tuple(rows), excluded=tuple(excluded),
                             diagnostics={"grid_drift": drift})

    if mode != "mc":
        raise InvalidParameterError(f"unknown mode {mode!r}")

    if levels is None:
        max_level = int(math.sqrt(max(horizon, 4) / LEVEL_GATE))
        wanted = None
    else:
        wanted = sorted(int(n) for n in levels)
        max_level = max(wanted)
    up, tot = level_updown_counts(walk, horizon=horizon, n_paths=n_paths,
                                  seed=seed, max_level=max_level,
                                  burn_in=burn_in, threads=threads,
                                  batch_size=batch_size)
    rows = []
    excluded = []
    candidates = wanted if wanted is not None else range(1, max_level + 1)
    for n in candidates:
        u = int(up[n])
        dn = int(tot[n] - up[n])
        if u + dn < min_events:
            excluded.append((n, f"events {u + dn} < {min_events}"))
            continue
        if u == 0 or dn == 0:
            excluded.append((n, "one-sided counts"))
            continue
        psi_n = n * math.log(u / dn)
        se_n = n * math.sqrt(1.0 / u + 1.0 / dn)
        rows.append((n, u, dn, psi_n, se_n))
    if len(rows) < 2:
        raise InvalidParameterError(
            "too few levels with usable counts; raise paths or horizon")
    psi, se, slope = _fit_psi(rows)
    return IndexEstimate(psi=psi, stderr=se, mode="mc",
                         per_level=tuple(rows), excluded=tuple(excluded),
                         diagnostics={"fit_slope": slope,
                                      "levels_used": len(rows)})
