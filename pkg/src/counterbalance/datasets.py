"""Shipped trade/GDP snapshots (USD billions, goods exports by reporter)."""

from __future__ import annotations

from importlib import resources

from .trade_matrix import (
    TradeMatrix,
    aggregate_regions,
    build_matrix,
    load_aggregation,
    load_gdp,
    load_trade_flows,
)

YEARS = ("2000", "2018")


def snapshot_path(name: str):
    return resources.files("counterbalance").joinpath("data", name)


def _read(name: str) -> bytes:
    return snapshot_path(name).read_bytes()


def load_snapshot(year, aggregate: bool = True) -> TradeMatrix:
    """Exposure matrix for a shipped year.

    With ``aggregate=True`` (the default) Hong Kong and Macao are folded into
    CHN as configured in ``aggregation.ini``; without it, building the matrix
    fails because Hong Kong's re-exports exceed its GDP.
    """
    year = str(year)
    if year not in YEARS:
        raise ValueError(f"no snapshot for {year}; available: {', '.join(YEARS)}")
    flows = load_trade_flows(_read(f"trade_{year}.csv"), period=year)
    gdp = load_gdp(_read(f"gdp_{year}.csv"), period=year)
    if aggregate:
        flows, gdp = aggregate_regions(flows, gdp, load_aggregation(_read("aggregation.ini")))
    return build_matrix(flows, gdp)
