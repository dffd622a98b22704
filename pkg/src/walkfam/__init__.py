"""Scaled random-walk families and their workload-queue counterparts.

The package builds walk families from a zero-mean base law and a positive
scaling vector, simulates plain and reflected paths and the matching
batch-arrival queues, solves the transient state-ratio equations of one
queue class, enumerates exact conditional outward-step probabilities, and
compares members through tail and transform orderings.
"""

from .families import (BaseDistribution, FamilyParameter, IncrementLaw,
                       KlebanerFamily, ScaledFamily, ScaledMember,
                       SignedSplit, SymmetricFamily, make_klebaner_family,
                       make_symmetric_family, scale_distribution, split_signed,
                       truncated_normal_base, two_point_base, uniform_base,
                       uniform_lattice_base)
from .errors import (ConfigError, CostLimitError, InvalidParameterError,
                     TruncationError, UnconvergedError, UnreachableLevelError,
                     UnsupportedModeError, WalkfamError)
from .walker import (norms_at, record_hittings, reflect_step, simulate_paths,
                     step, write_paths_csv)
from .queueing import (arrival_update, simulate_queue, workloads_at_arrival,
                       workloads_at_clock, workloads_from_increments,
                       write_queue_csv)
from .ck_solver import (CkSolution, LatticeSpec, QExtraction, extract_q,
                        integrate_ck, integrate_spec, verify_property1,
                        verify_property2)
from .analysis import (check_weak_semiconservative,
                       conditional_outward_grid, conditional_outward_ladder,
                       estimate_conditional_outward,
                       estimate_hitting_conditional, estimate_index, exact_nd,
                       limiting_ratios, moment_expansion_check,
                       refine_lattice, refinement_margin_drift, tail_crossing)

__version__ = "0.1.0"
