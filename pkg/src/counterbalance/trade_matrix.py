"""Ingestion of bilateral trade flows and GDP, region aggregation, and
construction of the row-stochastic exposure matrix ``P``.

``P[i, j]`` is the fraction of country ``i``'s GDP exported to ``j`` and the
diagonal ``P[i, i]`` is the non-exported fraction, so every row sums to one.
"""

from __future__ import annotations

import configparser
import csv
import io
import itertools
import logging
import math
import os
import re
import string
import threading
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (
    AggregationError,
    ExportsExceedGdp,
    GroupCodeCollision,
    InvalidCountryCode,
    MalformedCSV,
    MissingGdp,
    NegativeFlow,
    NonPositiveGdp,
    SelfFlow,
    UnknownColumn,
    UnknownCountry,
)

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12

# Plain decimal numbers only: no thousands separators, no underscores, no nan/inf.
_NUMBER = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")
_CODE = re.compile(r"^[A-Z]{3}$")


def parse_number(text: str, *, where: str = "") -> float:
    """Parse a CSV numeric cell, rejecting thousands separators and specials."""
    cell = text.strip()
    if not _NUMBER.match(cell):
        raise MalformedCSV(f"not a plain decimal number{where}: {text!r}")
    return float(cell)


def normalize_code(text: str, *, where: str = "") -> str:
    code = text.strip().upper()
    if not _CODE.match(code):
        raise InvalidCountryCode(f"not an ISO-3 code{where}: {text!r}")
    return code


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CountryIndex:
    """Ordered list of ISO-3 codes with a code -> position lookup."""

    codes: tuple[str, ...]
    positions: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        codes = tuple(self.codes)
        for code in codes:
            if not isinstance(code, str) or not _CODE.match(code):
                raise InvalidCountryCode(f"not an uppercase ISO-3 code: {code!r}")
        if len(set(codes)) != len(codes):
            dupes = sorted({c for c in codes if codes.count(c) > 1})
            raise InvalidCountryCode(f"duplicate codes in index: {dupes}")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(
            self, "positions", MappingProxyType({c: k for k, c in enumerate(codes)})
        )

    @classmethod
    def from_codes(cls, codes: Iterable[str], *, sort: bool = True) -> "CountryIndex":
        codes = [normalize_code(c) for c in codes]
        return cls(tuple(sorted(codes)) if sort else tuple(codes))

    def __len__(self):
        return len(self.codes)

    def __iter__(self):
        return iter(self.codes)

    def __contains__(self, code):
        return code in self.positions

    def position(self, country) -> int:
        """Resolve a code or an integer position to an integer position."""
        if isinstance(country, (int, np.integer)) and not isinstance(country, bool):
            k = int(country)
            if not 0 <= k < len(self.codes):
                raise UnknownCountry(f"position {k} outside 0..{len(self.codes) - 1}")
            return k
        code = str(country).strip().upper()
        try:
            return self.positions[code]
        except KeyError:
            raise UnknownCountry(f"unknown country code {country!r}") from None


@dataclass(frozen=True)
class BilateralFlowTable:
    """Normalized export flows, one entry per (reporter, partner) pair."""

    entries: tuple[tuple[str, str, float], ...]
    period: str | None = None

    def __post_init__(self):
        seen = set()
        for reporter, partner, value in self.entries:
            if reporter == partner:
                raise SelfFlow(f"self-flow {reporter}->{partner}")
            if not value >= 0:
                raise NegativeFlow(f"negative flow {reporter}->{partner}: {value}")
            if (reporter, partner) in seen:
                raise MalformedCSV(f"duplicate pair {reporter}->{partner}")
            seen.add((reporter, partner))

    @classmethod
    def from_mapping(cls, flows: Mapping[tuple[str, str], float], period=None):
        return cls(tuple((r, p, float(v)) for (r, p), v in sorted(flows.items())), period)

    def as_dict(self) -> dict[tuple[str, str], float]:
        return {(r, p): v for r, p, v in self.entries}

    def codes(self) -> set[str]:
        return {c for r, p, _ in self.entries for c in (r, p)}

    def total(self) -> float:
        return math.fsum(v for _, _, v in self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class GdpTable:
    values: Mapping[str, float]
    period: str | None = None

    def __post_init__(self):
        for code, value in self.values.items():
            if not value > 0:
                raise NonPositiveGdp(f"GDP for {code} must be strictly positive, got {value}")
        object.__setattr__(self, "values", MappingProxyType(dict(sorted(self.values.items()))))

    def __getitem__(self, code):
        return self.values[code]

    def __contains__(self, code):
        return code in self.values


@dataclass(frozen=True)
class AggregationMap:
    """Group code -> member codes, e.g. ``{"CHN": ("CHN", "HKG", "MAC")}``."""

    groups: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        groups = {}
        owner = {}
        for group, members in self.groups.items():
            group = normalize_code(group, where=" (group code)")
            members = tuple(normalize_code(m, where=f" (member of {group})") for m in members)
            for m in members:
                if m in owner and owner[m] != group:
                    raise AggregationError(f"{m} appears in groups {owner[m]} and {group}")
                owner[m] = group
            groups[group] = members
        object.__setattr__(self, "groups", MappingProxyType(groups))

    def member_to_group(self) -> dict[str, str]:
        return {m: g for g, members in self.groups.items() for m in members}


@dataclass(frozen=True, eq=False)
class TradeMatrix:
    """Validated row-stochastic exposure matrix with its country index and GDP."""

    index: CountryIndex
    P: np.ndarray
    gdp: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        n = len(self.index)
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(P)):
            raise ValueError("P has non-finite entries")
        if P.min() < 0 or P.max() > 1:
            raise ValueError("P entries must lie in [0, 1]")
        dev = np.abs(P.sum(axis=1) - 1.0).max() if n else 0.0
        if dev > ROW_SUM_TOL:
            raise ValueError(f"rows of P must sum to 1 (max deviation {dev:.3e})")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        if self.gdp is not None:
            gdp = np.array(self.gdp, dtype=float)
            if gdp.shape != (n,) or not np.all(gdp > 0):
                raise ValueError("gdp must be a strictly positive vector aligned to the index")
            gdp.setflags(write=False)
            object.__setattr__(self, "gdp", gdp)

    @classmethod
    def from_array(cls, P, gdp=None, codes=None) -> "TradeMatrix":
        P = np.asarray(P, dtype=float)
        if codes is None:
            codes = synthetic_codes(P.shape[0])
        return cls(CountryIndex(tuple(codes)), P, gdp)

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def codes(self) -> tuple[str, ...]:
        return self.index.codes

    def position(self, country) -> int:
        return self.index.position(country)

    def cached(self, key, factory):
        """Return ``factory()`` memoized under ``key`` for this matrix.

        The first computation for a key happens under the lock; later reads
        are lock-free dictionary lookups.
        """
        try:
            return self._cache[key]
        except KeyError:
            pass
        with self._lock:
            if key not in self._cache:
                self._cache[key] = factory()
            return self._cache[key]


def synthetic_codes(n: int) -> tuple[str, ...]:
    """``AAA, AAB, ...`` placeholder codes for matrices without real countries."""
    letters = string.ascii_uppercase
    return tuple("".join(t) for t in itertools.islice(itertools.product(letters, repeat=3), n))


@dataclass(frozen=True)
class ConnectivityReport:
    strongly_connected: bool
    components: tuple[tuple[str, ...], ...]
    giant: tuple[str, ...]
    unreachable_from_giant: tuple[str, ...]
    not_reaching_giant: tuple[str, ...]
    isolated: tuple[str, ...]
    aperiodic: bool

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def well_connected(self) -> bool:
        """Strongly connected and aperiodic (some country keeps part of its GDP)."""
        return self.strongly_connected and self.aperiodic


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowSchema:
    reporter: str = "reporter_iso3"
    partner: str = "partner_iso3"
    value: str = "export_value"


@dataclass(frozen=True)
class GdpSchema:
    code: str = "iso3"
    value: str = "gdp"


def _read_text(source) -> str:
    if isinstance(source, bytes):
        data = source
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise MalformedCSV(f"input is not UTF-8: {exc}") from None
    return data


def _rows(source, required: Iterable[str]):
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedCSV("empty CSV: a header row is required") from None
    except csv.Error as exc:
        raise MalformedCSV(str(exc)) from None
    header = [h.strip() for h in header]
    cols = {}
    for name in required:
        if name not in header:
            raise UnknownColumn(f"column {name!r} not found in header {header}")
        cols[name] = header.index(name)
    try:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedCSV(
                    f"line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            yield lineno, {name: row[k] for name, k in cols.items()}
    except csv.Error as exc:
        raise MalformedCSV(str(exc)) from None


def load_trade_flows(source, schema: FlowSchema | None = None, period=None) -> BilateralFlowTable:
    """Read export flows from CSV; duplicate (reporter, partner) rows are summed."""
    schema = schema or FlowSchema()
    acc: dict[tuple[str, str], float] = {}
    for lineno, row in _rows(source, (schema.reporter, schema.partner, schema.value)):
        where = f" (line {lineno})"
        reporter = normalize_code(row[schema.reporter], where=where)
        partner = normalize_code(row[schema.partner], where=where)
        value = parse_number(row[schema.value], where=where)
        if reporter == partner:
            raise SelfFlow(f"self-flow {reporter}->{partner}{where}")
        if value < 0:
            raise NegativeFlow(f"negative flow {reporter}->{partner} = {value}{where}")
        key = (reporter, partner)
        acc[key] = acc.get(key, 0.0) + value
    return BilateralFlowTable.from_mapping(acc, period)


def load_gdp(source, schema: GdpSchema | None = None, period=None) -> GdpTable:
    schema = schema or GdpSchema()
    values: dict[str, float] = {}
    for lineno, row in _rows(source, (schema.code, schema.value)):
        where = f" (line {lineno})"
        code = normalize_code(row[schema.code], where=where)
        if code in values:
            raise MalformedCSV(f"duplicate GDP entry for {code}{where}")
        value = parse_number(row[schema.value], where=where)
        if value <= 0:
            raise NonPositiveGdp(f"GDP for {code} must be strictly positive{where}")
        values[code] = value
    return GdpTable(values, period)


def load_aggregation(source) -> AggregationMap:
    """Read an INI file whose ``[groups]`` section maps a group code to members.

    ::

        [groups]
        CHN = CHN, HKG, MAC
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str.upper
    try:
        parser.read_string(_read_text(source))
    except configparser.Error as exc:
        raise AggregationError(f"bad aggregation config: {exc}") from None
    if not parser.has_section("groups"):
        raise AggregationError("aggregation config needs a [groups] section")
    groups = {
        code: tuple(m for m in re.split(r"[,\s]+", members.strip()) if m)
        for code, members in parser.items("groups")
    }
    return AggregationMap(groups)


def reconcile_mirrors(exports: BilateralFlowTable, imports: BilateralFlowTable,
                      mode: str = "reporter") -> BilateralFlowTable:
    """Combine exporter-declared flows with importer-declared mirror records.

    ``imports`` rows are keyed (importer, exporter). ``mode="reporter"`` keeps
    the export records; ``mode="average"`` averages the two declarations where
    both exist and falls back to whichever one is present.
    """
    if mode == "reporter":
        return exports
    if mode != "average":
        raise ValueError(f"unknown mirror mode {mode!r}")
    ex = exports.as_dict()
    mirror = {(p, r): v for (r, p), v in imports.as_dict().items()}
    merged = {}
    for key in set(ex) | set(mirror):
        if key in ex and key in mirror:
            merged[key] = 0.5 * (ex[key] + mirror[key])
        else:
            merged[key] = ex.get(key, mirror.get(key))
    return BilateralFlowTable.from_mapping(merged, exports.period)


def aggregate_regions(flows: BilateralFlowTable, gdp: GdpTable,
                      amap: AggregationMap) -> tuple[BilateralFlowTable, GdpTable]:
    """Fold group members into their group code.

    Flows between members of one group become internal and are dropped; all
    other member flows are re-keyed to the group and summed. Group GDP is the
    sum of member GDPs.
    """
    present = flows.codes() | set(gdp.values)
    groups = {}
    for group, members in amap.groups.items():
        if group in present and group not in members:
            raise GroupCodeCollision(
                f"group code {group} collides with an unaggregated country in the data"
            )
        kept = tuple(m for m in members if m in present)
        missing = sorted(set(members) - set(kept))
        if missing:
            warnings.warn(f"group {group}: members {missing} not in data, skipped", stacklevel=2)
        if kept:
            groups[group] = kept
    rekey = {m: g for g, members in groups.items() for m in members}

    acc: dict[tuple[str, str], float] = defaultdict(float)
    internal = 0.0
    for reporter, partner, value in flows.entries:
        r = rekey.get(reporter, reporter)
        p = rekey.get(partner, partner)
        if r == p:
            internal += value
            continue
        acc[(r, p)] += value
    if internal:
        logger.info("aggregation removed %g of intra-group flows", internal)

    values: dict[str, float] = {}
    for code, value in gdp.values.items():
        g = rekey.get(code, code)
        values[g] = values.get(g, 0.0) + value
    return (BilateralFlowTable.from_mapping(acc, flows.period),
            GdpTable(values, gdp.period))


# ---------------------------------------------------------------------------
# Matrix construction
# ---------------------------------------------------------------------------


def build_matrix(flows: BilateralFlowTable, gdp: GdpTable,
                 index: CountryIndex | None = None) -> TradeMatrix:
    """Build ``P`` with ``P[i, j] = flow(i -> j) / gdp_i`` and the residual on
    the diagonal.

    Without an explicit ``index`` every country seen in either table is
    included, so a trading country without a GDP record raises
    ``MissingGdp``. With an ``index``, flows touching other countries are
    dropped.
    """
    if index is None:
        index = CountryIndex.from_codes(set(gdp.values) | flows.codes())
    missing = [c for c in index.codes if c not in gdp]
    if missing:
        raise MissingGdp(f"no GDP for: {', '.join(missing)}")

    n = len(index)
    g = np.array([gdp[c] for c in index.codes], dtype=float)
    F = np.zeros((n, n))
    dropped = 0
    for reporter, partner, value in flows.entries:
        if reporter in index and partner in index:
            F[index.positions[reporter], index.positions[partner]] = value
        else:
            dropped += 1
    if dropped:
        logger.info("dropped %d flows involving countries outside the index", dropped)

    totals = [math.fsum(F[k]) for k in range(n)]
    offenders = {index.codes[k]: (totals[k], g[k]) for k in range(n) if totals[k] > g[k]}
    if offenders:
        raise ExportsExceedGdp(offenders)

    P = F / g[:, None]
    for k in range(n):
        P[k, k] = 0.0
        stay = 1.0 - math.fsum(P[k])
        # exports == gdp up to rounding
        P[k, k] = stay if stay > 0 else 0.0
    return TradeMatrix(index, P, g)


def check_connectivity(P) -> ConnectivityReport:
    """Strong connectivity of the graph of positive off-diagonal entries."""
    tm = P if isinstance(P, TradeMatrix) else TradeMatrix.from_array(P)
    A = np.array(tm.P, copy=True)
    np.fill_diagonal(A, 0.0)
    adj = csr_matrix(A > 0)
    codes = tm.codes
    n = len(codes)
    if n == 0:
        return ConnectivityReport(True, (), (), (), (), (), False)
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    comps = [tuple(codes[k] for k in range(n) if labels[k] == c) for c in range(ncomp)]
    comps.sort(key=lambda c: (-len(c), c))
    giant = comps[0]
    root = codes.index(giant[0])
    forward = set(breadth_first_order(adj, root, directed=True, return_predecessors=False))
    backward = set(breadth_first_order(adj.T.tocsr(), root, directed=True,
                                       return_predecessors=False))
    degree = (A > 0).sum(axis=0) + (A > 0).sum(axis=1)
    return ConnectivityReport(
        strongly_connected=ncomp == 1,
        components=tuple(comps),
        giant=giant,
        unreachable_from_giant=tuple(codes[k] for k in range(n) if k not in forward),
        not_reaching_giant=tuple(codes[k] for k in range(n) if k not in backward),
        isolated=tuple(codes[k] for k in range(n) if degree[k] == 0),
        aperiodic=bool(np.any(np.diag(tm.P) > 0)),
    )
