"""Authority distribution of a bilateral trade network and its sensitivity to
trade wars and globalization."""

__version__ = "0.1.0"

from .authority import AuthorityVector, RatioPair, authority_distribution, ratios
from .datasets import load_snapshot
from .errors import (
    CounterbalanceError,
    IngestionError,
    SolverError,
    UnknownCountry,
    VerificationFailure,
)
from .policy import (
    classify_partner,
    globalization_stance,
    midpoint_resolution,
    rank_targets,
    side_effects,
)
from .sensitivity import (
    ReactionRule,
    globalization_derivative,
    globalization_M,
    log_elasticity,
    reduced_blocks,
    tradewar_derivative,
)
from .trade_matrix import (
    AggregationMap,
    BilateralFlowTable,
    CountryIndex,
    GdpTable,
    TradeMatrix,
    aggregate_regions,
    build_matrix,
    check_connectivity,
    load_aggregation,
    load_gdp,
    load_trade_flows,
)

__all__ = [
    "AggregationMap", "AuthorityVector", "BilateralFlowTable", "CounterbalanceError",
    "CountryIndex", "GdpTable", "IngestionError", "RatioPair", "ReactionRule", "SolverError",
    "TradeMatrix", "UnknownCountry", "VerificationFailure", "aggregate_regions",
    "authority_distribution", "build_matrix", "check_connectivity", "classify_partner",
    "globalization_M", "globalization_derivative", "globalization_stance", "load_aggregation",
    "load_gdp", "load_snapshot", "load_trade_flows", "log_elasticity", "midpoint_resolution",
    "rank_targets", "ratios", "reduced_blocks", "side_effects", "tradewar_derivative",
]
