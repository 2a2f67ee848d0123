"""Equilibrium computation for linear exchange markets.

The pipeline: check existence (`check_star_condition`), minimize the convex
program (`solve`), extract and verify the equilibrium, certify optimality
through the self-dual multipliers, and round to an exact rational
equilibrium (`rationalize`) with determinant-bounded denominators.
"""

from .errors import (
    AdmarketError,
    AggregationMismatchError,
    DomainError,
    InconsistentTightSetError,
    InfeasibleMarketError,
    MarketFormatError,
    NoCycleThroughNodeError,
    NotOptimalError,
    RoundingFailedError,
    SizeLimitError,
    VerificationFailedError,
)
from .market import (
    BackMap,
    GeneralEquilibrium,
    GeneralMarket,
    Market,
    aggregate_back,
    load_instance,
    parse_instance,
    reduce_to_bijective,
    scale_to_integer_utilities,
    validate,
    verify_general_equilibrium,
)
from .graphs import (
    FeasibilityVerdict,
    FlowSupport,
    SccDecomposition,
    check_star_condition,
    check_super_self_sufficiency,
    cycle_cover_point,
    flow_support,
    scc,
)
from .program import (
    CPPoint,
    eliminate_beta,
    is_feasible,
    objective,
    reduced_gradient,
    reduced_objective,
)
from .solver import SolveReport, SolverConfig, solve
from .equilibrium import (
    Equilibrium,
    agent_utilities,
    convex_combine,
    embed_equilibrium,
    extract_equilibrium,
    make_equilibrium,
    verify_equilibrium,
)
from .duality import (
    DualCertificate,
    map_cpc_to_cpd,
    self_dual_certificate,
    verify_cpc,
    verify_cpd,
    verify_cpj,
    verify_kkt,
    verify_self_dual_exact,
)
from .exact import (
    RationalSolution,
    TightSet,
    bitsize_bound,
    detect_tight_set,
    oracle_solve,
    rationalize,
    sparsify_support,
)
from .generate import GenSpec, generate

__version__ = "0.1.0"
