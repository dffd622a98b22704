"""Analysis layer: exact enumeration, Monte Carlo estimation, order checks."""

from .estimates import (
    ConditionalEstimate,
    HittingConditional,
    IndexEstimate,
    LadderResult,
    conditional_outward_grid,
    conditional_outward_ladder,
    estimate_conditional_outward,
    estimate_hitting_conditional,
    estimate_index,
    level_updown_counts,
)
from .exact import (
    NDResult,
    exact_nd,
    limiting_ratios,
    parity_locked,
    profile_change_pmf,
    reachable_profiles,
)
from .ordering import (
    MomentExpansionReport,
    TailCrossingReport,
    moment_expansion_check,
    tail_crossing,
)
from .refine import (
    MarginDriftReport,
    RefinementLevel,
    RefinementResult,
    refine_lattice,
    refinement_margin_drift,
)
from .weak import (
    MarginPoint,
    MemberComparison,
    WeakSemiReport,
    check_weak_semiconservative,
)

__all__ = [
    "ConditionalEstimate",
    "HittingConditional",
    "IndexEstimate",
    "LadderResult",
    "conditional_outward_grid",
    "conditional_outward_ladder",
    "estimate_conditional_outward",
    "estimate_hitting_conditional",
    "estimate_index",
    "level_updown_counts",
    "NDResult",
    "exact_nd",
    "limiting_ratios",
    "parity_locked",
    "profile_change_pmf",
    "reachable_profiles",
    "MomentExpansionReport",
    "TailCrossingReport",
    "moment_expansion_check",
    "tail_crossing",
    "MarginDriftReport",
    "RefinementLevel",
    "RefinementResult",
    "refine_lattice",
    "refinement_margin_drift",
    "MarginPoint",
    "MemberComparison",
    "WeakSemiReport",
    "check_weak_semiconservative",
]
