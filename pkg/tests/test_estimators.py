"""Monte Carlo estimators: windowed conditioning, debias, growth index."""

import numpy as np
import pytest

from walkfam.analysis import (
    conditional_outward_ladder,
    estimate_conditional_outward,
    estimate_hitting_conditional,
    estimate_index,
)
from walkfam.analysis.estimates import (
    _updown_exact_1d,
    conditional_outward_grid,
    default_window,
)
from walkfam.errors import InvalidParameterError
from walkfam.families import (
    BaseDistribution,
    ScaledFamily,
    SymmetricFamily,
    make_klebaner_family,
    two_point_base,
    uniform_base,
)
from fractions import Fraction


def test_estimate_matches_exact_value(pm2_family):
    # strict limit at z=4 for the reference is 3/8 (profile enumeration)
    est = estimate_conditional_outward(pm2_family.reference(), 4,
                                       horizon=500, n_paths=200_000,
                                       seed=11, threads=4)
    assert est.events > 100_000
    assert abs(est.value - 0.375) < 4 * est.stderr
    assert est.window is None
    assert est.reachable


def test_half_tie_counting_shifts_by_tie_mass(pm2_family):
    # every occupied profile of this member has tie mass 1/2 (the two
    # coordinates move one lattice unit each), so counting ties as one
    # half lands at 3/8 + 1/4 = 5/8
    est = estimate_conditional_outward(pm2_family.reference(), 4,
                                       horizon=500, n_paths=200_000,
                                       seed=11, ties="half", threads=4)
    assert abs(est.value - 0.625) < 4 * est.stderr


def test_ties_argument_validated(pm2_family):
    with pytest.raises(InvalidParameterError):
        estimate_conditional_outward(pm2_family.reference(), 4, horizon=50,
                                     n_paths=100, seed=0, ties="maybe")


def test_grid_is_thread_independent(pm2_family):
    member = pm2_family.member([1.5, 0.5])
    kw = dict(horizon=200, n_paths=4000, seed=5, batch_size=512)
    a = conditional_outward_grid(member, [2, 4], **kw, threads=1)
    b = conditional_outward_grid(member, [2, 4], **kw, threads=4)
    for x, y in zip(a, b):
        assert x.value == y.value and x.events == y.events


def test_default_window_formula():
    member = ScaledFamily(base=uniform_base(1.0), dimension=2).member(
        [1.2, 0.8])
    # relative floor 1% of z with an absolute floor from the step scale
    assert default_window(member, 1.0) == pytest.approx(
        0.05 * np.sqrt(1 / 3))
    assert default_window(member, 4.0) == pytest.approx(0.04)
    est = estimate_conditional_outward(member, 1.0, horizon=60,
                                       n_paths=2000, seed=1)
    assert est.window == pytest.approx(0.05 * np.sqrt(1 / 3))


def test_off_lattice_level_flagged_unreachable(pm2_family):
    member = pm2_family.member([1.5, 0.5])
    (est,) = conditional_outward_grid(member, [2.5], horizon=100,
                                      n_paths=1000, seed=0)
    assert not est.reachable
    assert est.events == 0
    assert np.isnan(est.value)


def test_parity_dead_level_measures_empty(pm2_family):
    # z = 2 sits on the reference lattice but is never occupied
    (est,) = conditional_outward_grid(pm2_family.reference(), [2],
                                      horizon=200, n_paths=2000, seed=3)
    assert est.reachable
    assert est.events == 0


def test_debias_combines_two_windows(pm2_family):
    member = pm2_family.reference()
    est = estimate_conditional_outward(member, 4, horizon=400,
                                       n_paths=100_000, seed=13,
                                       debias=True, threads=4)
    assert est.method == "mc-debiased"
    assert est.detail is not None
    assert set(est.detail) >= {"early_value", "late_value", "early_events",
                               "late_events", "inv_time_ratio"}
    # the early window sits at smaller times, so its mean inverse time
    # is strictly larger
    assert est.detail["inv_time_ratio"] > 1.0
    assert est.detail["early_events"] > 0
    plain = estimate_conditional_outward(member, 4, horizon=400,
                                         n_paths=100_000, seed=13, threads=4)
    comb = np.hypot(est.stderr, plain.stderr)
    assert abs(est.value - plain.value) < 5 * comb
    assert abs(est.value - 0.375) < 4 * est.stderr


def test_debias_needs_room_for_the_early_window(pm2_family):
    with pytest.raises(InvalidParameterError):
        estimate_conditional_outward(pm2_family.reference(), 4, horizon=100,
                                     n_paths=1000, seed=0, debias=True,
                                     count_from=1)
    with pytest.raises(InvalidParameterError):
        estimate_conditional_outward(pm2_family.reference(), 4, horizon=100,
                                     n_paths=1000, seed=0, count_from=100)


def test_ladder_reports_stability():
    member = ScaledFamily(base=two_point_base(), dimension=1).member([1.0])
    ladder = conditional_outward_ladder(member, [3], horizon=400,
                                        n_paths=20_000, seed=9, threads=4)
    assert len(ladder.horizons) >= 2
    assert ladder.stable
    # d=1: at any positive level the next step is up with probability 1/2
    final = ladder.by_horizon[ladder.horizons[-1]][0]
    assert abs(final.value - 0.5) < 4 * final.stderr


def test_updown_exact_1d_values():
    member = ScaledFamily(base=two_point_base(), dimension=1).member([1.0])
    up, down = _updown_exact_1d(member, 3)
    assert (up, down) == (0.5, 0.5)
    # mass that overshoots the origin reflects to the upside
    skew = BaseDistribution.lattice({2: Fraction(1, 2), -1: Fraction(1, 4),
                                     -3: Fraction(1, 4)})
    member = ScaledFamily(base=skew, dimension=1).member([1.0])
    up, down = _updown_exact_1d(member, 1)
    # from level 1: +2 is up; -1 is down; -3 reflects to |1-3| = 2, up
    assert up == pytest.approx(3 / 4)
    assert down == pytest.approx(1 / 4)


def test_index_symmetric_1d_is_exactly_zero():
    member = ScaledFamily(base=two_point_base(), dimension=1).member([1.0])
    res = estimate_index(member)
    assert res.mode == "formula"
    assert res.psi == 0.0
    assert res.stderr == 0.0

    sym = SymmetricFamily([0.5])
    res = estimate_index(sym)
    assert res.psi == 0.0


def test_index_formula_decaying_drift():
    fam = make_klebaner_family(0.25)
    res = estimate_index(fam, n_formula=100_000)
    # n log(up/down) -> 4 alpha with an O(1/n^2) correction
    assert res.mode == "formula"
    assert abs(res.psi - 1.0) < 1e-3
    assert res.diagnostics["grid_drift"] < 1e-3
    rows = res.per_level
    assert [r[0] for r in rows] == [25_000, 50_000, 100_000]


def test_index_mc_smoke():
    fam = make_klebaner_family(0.25)
    res = estimate_index(fam, mode="mc", horizon=200, n_paths=5000, seed=21,
                         threads=4)
    assert res.mode == "mc"
    assert res.per_level
    assert res.stderr > 0
    # generous: the drift pushes psi_n near 1 already at small n
    assert 0.0 < res.psi < 2.5
    # levels beyond the diffusive range are excluded, not silently used
    gate = int(np.sqrt(200 / 2.0))
    assert all(r[0] <= gate for r in res.per_level)


def test_index_mc_excludes_thin_levels():
    member = ScaledFamily(base=two_point_base(), dimension=1).member([1.0])
    # level 30 needs t >= 2 * 30^2, far past this horizon, so it can
    # never collect events; the low levels carry the fit
    res = estimate_index(member, mode="mc", levels=[1, 2, 30], horizon=100,
                         n_paths=3000, seed=2, threads=4)
    assert any(n == 30 for (n, _) in res.excluded)
    assert [r[0] for r in res.per_level] == [1, 2]


def test_hitting_conditional_pools_visits():
    member = ScaledFamily(base=two_point_base(), dimension=1).member([1.0])
    res = estimate_hitting_conditional(member, 2, horizon=300,
                                       n_paths=5000, seed=15)
    assert not res.insufficient
    assert res.pooled_visits > 5000
    assert abs(res.pooled_value - 0.5) < 4 * res.pooled_stderr
    assert res.per_visit


def test_hitting_conditional_flags_empty():
    member = ScaledFamily(base=two_point_base(), dimension=1).member([1.0])
    res = estimate_hitting_conditional(member, 40, horizon=12, n_paths=200,
                                       seed=1)
    assert res.insufficient
    assert res.pooled_visits == 0
