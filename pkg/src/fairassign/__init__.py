"""Fair random assignment under submodular constraints.

Simultaneous eating over polymatroids, Nash-welfare convex programs,
Fisher-market envy-graph allocation and the audits that certify them.
"""

from .audit import (
    AuditReport,
    audit_allocation,
    check_envy,
    check_sd_envy,
    chores_pareto_certificate,
    ef_factor,
    nsw,
    nsw_ratio,
    pareto_gap,
)
from .eating import EatingTrace, chores_eat, eat, ps, submodular_eat
from .fisher import (
    ConcaveUtility,
    FisherInstance,
    complete_allocation,
    eliminate_cycles,
    envy_graph,
    oracle_alpha,
    partial_allocation,
    run_fisher,
)
from .lottery import bvn_decompose
from .model import (
    Allocation,
    CardinalInstance,
    InstanceError,
    Lottery,
    OrdinalInstance,
    SubmodularOracle,
    validate,
)
from .nswopt import SolveResult, max_nsw, max_nsw_ef, max_nsw_restricted
from .polymatroid import active_items, is_member, max_step, max_tight_set

__all__ = [
    "Allocation", "AuditReport", "CardinalInstance", "ConcaveUtility", "EatingTrace",
    "FisherInstance", "InstanceError", "Lottery", "OrdinalInstance", "SolveResult",
    "SubmodularOracle", "active_items", "audit_allocation", "bvn_decompose", "check_envy",
    "check_sd_envy", "chores_eat", "chores_pareto_certificate", "complete_allocation",
    "eat", "ef_factor", "eliminate_cycles", "envy_graph", "is_member", "max_nsw",
    "max_nsw_ef", "max_nsw_restricted", "max_step", "max_tight_set", "nsw", "nsw_ratio",
    "oracle_alpha", "pareto_gap", "partial_allocation", "ps", "run_fisher",
    "submodular_eat", "validate",
]
__version__ = "0.1.0"
