"""Command-line interface: ``counterbalance {authority,tradewar,globalization,verify}``."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .authority import authority_distribution, ratios
from .datasets import snapshot_path
from .errors import CounterbalanceError, IngestionError, VerificationFailure
from .oracle import DEFAULT_DPS, verify_all, summarize
from .policy import (
    DEFAULT_THRESHOLD,
    GLOBALIZATION_THRESHOLD,
    globalization_stance,
    midpoint_resolution,
    rank_targets,
    side_effects,
    classify_partner,
)
from .sensitivity import ReactionRule
from .trade_matrix import (
    FlowSchema,
    GdpSchema,
    aggregate_regions,
    build_matrix,
    load_aggregation,
    load_gdp,
    load_trade_flows,
    reconcile_mirrors,
)

logger = logging.getLogger(__name__)

SNAPSHOTS = ("2000", "2018")

_DEFAULTS = {
    "trade": None,
    "gdp": None,
    "aggregate": None,
    "imports": None,
    "mirror": "reporter",
    "snapshot": None,
    "year": None,
    "lambda": "gdp",
    "threshold": None,
    "format": "table",
    "decimals": 4,
    "order": None,
    "trade_columns": None,
    "gdp_columns": None,
}


@dataclass
class RunConfig:
    trade_path: str | None
    gdp_path: str | None
    aggregation_path: str | None
    imports_path: str | None
    mirror: str
    year: str | None
    rule: ReactionRule
    threshold: float | None
    output_format: str
    decimals: int
    order: list[str] | None
    flow_schema: FlowSchema
    gdp_schema: GdpSchema

    def __post_init__(self):
        if self.threshold is not None and self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if not 1 <= self.decimals <= 12:
            raise ValueError("decimal places must be in 1..12")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _snapshot_path(name: str) -> str:
    return str(snapshot_path(name))


def _read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise IngestionError(f"cannot read config file {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise IngestionError(f"bad config file {path}: {exc}") from None
    if not parser.has_section("run"):
        return {}
    return {k.replace("-", "_"): v for k, v in parser.items("run")}


def make_config(args) -> RunConfig:
    """Merge defaults, the optional config file and flags (flags win)."""
    merged = dict(_DEFAULTS)
    if args.config:
        merged.update(_read_config_file(args.config))
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value

    if merged["snapshot"]:
        year = str(merged["snapshot"])
        if year not in SNAPSHOTS:
            raise IngestionError(f"no shipped snapshot for {year}; choose from {SNAPSHOTS}")
        merged["trade"] = merged["trade"] or _snapshot_path(f"trade_{year}.csv")
        merged["gdp"] = merged["gdp"] or _snapshot_path(f"gdp_{year}.csv")
        merged["aggregate"] = merged["aggregate"] or _snapshot_path("aggregation.ini")
        merged["year"] = merged["year"] or year

    flow_schema = FlowSchema()
    if merged["trade_columns"]:
        cols = [c.strip() for c in str(merged["trade_columns"]).split(",")]
        if len(cols) != 3:
            raise IngestionError("--trade-columns needs reporter,partner,value")
        flow_schema = FlowSchema(*cols)
    gdp_schema = GdpSchema()
    if merged["gdp_columns"]:
        cols = [c.strip() for c in str(merged["gdp_columns"]).split(",")]
        if len(cols) != 2:
            raise IngestionError("--gdp-columns needs code,value")
        gdp_schema = GdpSchema(*cols)

    order = merged["order"]
    if isinstance(order, str):
        order = [c.strip().upper() for c in order.split(",") if c.strip()]
    threshold = merged["threshold"]
    return RunConfig(
        trade_path=merged["trade"],
        gdp_path=merged["gdp"],
        aggregation_path=merged["aggregate"],
        imports_path=merged["imports"],
        mirror=merged["mirror"],
        year=None if merged["year"] is None else str(merged["year"]),
        rule=ReactionRule.parse(merged["lambda"]),
        threshold=None if threshold is None else float(threshold),
        output_format=merged["format"],
        decimals=int(merged["decimals"]),
        order=order,
        flow_schema=flow_schema,
        gdp_schema=gdp_schema,
    )


def _open_input(path, what):
    try:
        return open(path, "rb")
    except OSError as exc:
        raise IngestionError(f"cannot read {what} file {path}: {exc.strerror}") from None


def load_matrix(config: RunConfig):
    if not config.trade_path or not config.gdp_path:
        raise IngestionError("both --trade and --gdp (or --snapshot) are required")
    with _open_input(config.trade_path, "trade") as fh:
        flows = load_trade_flows(fh, config.flow_schema, config.year)
    with _open_input(config.gdp_path, "gdp") as fh:
        gdp = load_gdp(fh, config.gdp_schema, config.year)
    if config.imports_path:
        with _open_input(config.imports_path, "imports") as fh:
            imports = load_trade_flows(fh, config.flow_schema, config.year)
        flows = reconcile_mirrors(flows, imports, config.mirror)
    if config.aggregation_path:
        with _open_input(config.aggregation_path, "aggregation") as fh:
            amap = load_aggregation(fh)
        flows, gdp = aggregate_regions(flows, gdp, amap)
    return build_matrix(flows, gdp)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _row_order(codes, order):
    if not order:
        return list(range(len(codes)))
    pos = {c: k for k, c in enumerate(codes)}
    missing = [c for c in order if c not in pos]
    if missing:
        from .errors import UnknownCountry
        raise UnknownCountry(f"unknown country code(s) in --order: {', '.join(missing)}")
    return [pos[c] for c in order]


def format_table(headers, rows, aligns=None) -> str:
    """Plain aligned text table; numbers right-aligned, text left-aligned."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(headers))]
    if aligns is None:
        aligns = ["<"] + [">"] * (len(headers) - 1)
    lines = []
    for n, r in enumerate(cells):
        lines.append("  ".join(f"{c:{a}{w}}" for c, a, w in zip(r, aligns, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _csv(headers, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    for r in rows:
        writer.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in r])
    return buf.getvalue()


def _json(payload) -> str:
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


def _fmt(x, decimals):
    return f"{x:.{decimals}f}"


def _pm(x, decimals):
    """Per-mille rendering used in human-readable tables."""
    return f"{1000 * x:.{decimals}f}"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_authority(config: RunConfig, show_ratios: bool = False) -> str:
    tm = load_matrix(config)
    av = authority_distribution(tm)
    pi = av.pi
    rows_idx = _row_order(tm.codes, config.order)
    d = config.decimals
    if config.output_format == "json":
        payload = {
            "command": "authority",
            "year": config.year,
            "countries": [tm.codes[k] for k in rows_idx],
            "pi": [float(pi[k]) for k in rows_idx],
            "gdp": [float(tm.gdp[k]) for k in rows_idx],
            "residual": av.residual,
            "method": av.method,
        }
        if show_ratios:
            payload["ratios"] = [
                {"actor": tm.codes[a], "partner": tm.codes[b],
                 "authority_ratio": r.authority_ratio, "gdp_ratio": r.gdp_ratio}
                for a in rows_idx for b in rows_idx if a != b
                for r in [ratios(pi, tm.gdp, a, b)]
            ]
        return _json(payload)
    if config.output_format == "csv":
        if show_ratios:
            rows = [(tm.codes[a], tm.codes[b], float(pi[a]), r.authority_ratio, r.gdp_ratio)
                    for a in rows_idx for b in rows_idx if a != b
                    for r in [ratios(pi, tm.gdp, a, b)]]
            return _csv(["actor", "partner", "pi_actor", "authority_ratio", "gdp_ratio"], rows)
        return _csv(["country", "pi", "gdp"],
                    [(tm.codes[k], float(pi[k]), float(tm.gdp[k])) for k in rows_idx])

    title = "Authority distribution" + (f" ({config.year})" if config.year else "")
    out = [title, ""]
    out.append(format_table(["country", "pi", "gdp"],
                            [(tm.codes[k], _fmt(pi[k], d), f"{tm.gdp[k]:g}") for k in rows_idx]))
    out.append(f"\nresidual |pi P - pi|_inf = {av.residual:.3e}")
    if show_ratios:
        out.append("\nRatios: cell (i, j) shows pi_j/pi_i / g_ji")
        headers = ["i\\j"] + [tm.codes[b] for b in rows_idx]
        grid = []
        for a in rows_idx:
            row = [tm.codes[a]]
            for b in rows_idx:
                if a == b:
                    row.append("")
                else:
                    r = ratios(pi, tm.gdp, a, b)
                    row.append(f"{_fmt(r.authority_ratio, d)}/{_fmt(r.gdp_ratio, d)}")
            grid.append(row)
        out.append(format_table(headers, grid))
    return "\n".join(out) + "\n"


def cmd_tradewar(config: RunConfig, actor: str, target: str | None = None) -> str:
    tm = load_matrix(config)
    pi = authority_distribution(tm).pi
    a = tm.position(actor)
    rule = config.rule
    threshold = DEFAULT_THRESHOLD if config.threshold is None else config.threshold
    d = config.decimals

    if target is None:
        ranking = rank_targets(tm, pi, a, rule, threshold)
        if config.order:
            keep = set(config.order)
            ranking = [c for c in ranking if c.partner in keep]
        if config.output_format == "json":
            return _json({
                "command": "tradewar", "year": config.year, "actor": tm.codes[a],
                "rule": rule.label, "threshold": threshold,
                "ranking": [{"partner": c.partner, "elasticity": c.elasticity,
                             "derivative": c.derivative, "lambda": c.lambda_,
                             "stance": c.stance, "status_quo": c.status_quo}
                            for c in ranking],
            })
        if config.output_format == "csv":
            return _csv(["rank", "partner", "elasticity", "derivative", "lambda", "stance"],
                        [(n + 1, c.partner, c.elasticity, c.derivative, c.lambda_, c.stance)
                         for n, c in enumerate(ranking)])
        head = (f"Trade-war targets for {tm.codes[a]}"
                + (f" ({config.year})" if config.year else "")
                + f", lambda={rule.label}, threshold={threshold:g}")
        body = format_table(
            ["rank", "partner", "elasticity (per mille)", "lambda", "stance"],
            [(n + 1, c.partner, _pm(c.elasticity, d), _fmt(c.lambda_, d), c.stance)
             for n, c in enumerate(ranking)],
            aligns=[">", "<", ">", ">", "<"])
        return f"{head}\n\n{body}\n"

    b = tm.position(target)
    cls = classify_partner(tm, pi, a, b, rule, threshold)
    report = side_effects(tm, pi, a, b, rule)
    mid = midpoint_resolution(pi, tm.gdp, a, b, tm.codes)
    rows_idx = _row_order(tm.codes, config.order)

    if config.output_format == "json":
        return _json({
            "command": "tradewar", "year": config.year,
            "actor": cls.actor, "target": cls.partner, "rule": rule.label,
            "lambda": cls.lambda_, "threshold": threshold,
            "classification": {"stance": cls.stance, "elasticity": cls.elasticity,
                               "derivative": cls.derivative, "status_quo": cls.status_quo},
            "side_effects": [{"country": tm.codes[k],
                              "derivative": float(report.derivatives[k]),
                              "elasticity": float(report.elasticities[k])} for k in rows_idx],
            "midpoint": {"authority_ratio": mid.authority_ratio, "gdp_ratio": mid.gdp_ratio,
                         "lambda": mid.midpoint, "dollar_for_dollar": mid.dollar_for_dollar},
        })
    if config.output_format == "csv":
        return _csv(["actor", "target", "rule", "lambda", "country", "derivative", "elasticity"],
                    [(cls.actor, cls.partner, rule.label, cls.lambda_, tm.codes[k],
                      float(report.derivatives[k]), float(report.elasticities[k]))
                     for k in rows_idx])

    out = [f"Trade war: {cls.actor} against {cls.partner}"
           + (f" ({config.year})" if config.year else ""),
           f"lambda rule {rule.label}: lambda = {_fmt(cls.lambda_, d)}", ""]
    stance = cls.stance + (" (status quo)" if cls.status_quo else "")
    out.append(f"d log pi_{cls.actor} / d log P_{cls.partner},{cls.actor} = "
               f"{_pm(cls.elasticity, d)} per mille  ->  {stance} (threshold {threshold:g})")
    out.append("\nSide effects (per mille):")
    out.append(format_table(["country", "elasticity", "sign"],
                            [(tm.codes[k], _pm(report.elasticities[k], d),
                              "+" if report.elasticities[k] > 0 else
                              ("-" if report.elasticities[k] < 0 else "0"))
                             for k in rows_idx]))
    out.append("\nMidpoint resolution:")
    out.append(format_table(["quantity", "value"], [
        ("pi_j/pi_i", _fmt(mid.authority_ratio, d)),
        ("g_ji", _fmt(mid.gdp_ratio, d)),
        ("midpoint lambda", _fmt(mid.midpoint, d)),
        ("reaction per dollar", _fmt(mid.dollar_for_dollar, d)),
    ]))
    return "\n".join(out) + "\n"


def cmd_globalization(config: RunConfig, country: str) -> str:
    tm = load_matrix(config)
    pi = authority_distribution(tm).pi
    k = tm.position(country)
    threshold = GLOBALIZATION_THRESHOLD if config.threshold is None else config.threshold
    extra = () if config.rule.kind in ("gdp-ratio", "authority-ratio") else (config.rule,)
    st = globalization_stance(tm, pi, k, threshold, extra_rules=extra)
    labels = list(st.effects)
    rows_idx = _row_order(tm.codes, config.order)
    d = config.decimals

    if config.output_format == "json":
        return _json({
            "command": "globalization", "year": config.year, "country": st.country,
            "stance": st.stance, "threshold": threshold,
            "elasticity_at_authority_rule": st.elasticity_at_authority_rule,
            "elasticity_at_gdp_rule": st.elasticity_at_gdp_rule,
            "effects": {lab: [{"country": tm.codes[j], "elasticity": float(st.effects[lab][j])}
                              for j in rows_idx] for lab in labels},
        })
    if config.output_format == "csv":
        return _csv(["country"] + [f"elasticity_{lab}" for lab in labels],
                    [(tm.codes[j], *(float(st.effects[lab][j]) for lab in labels))
                     for j in rows_idx])
    out = [f"Globalization: {st.country}" + (f" ({config.year})" if config.year else ""), ""]
    out.append(f"d log pi_{st.country} / d log P_ii: "
               f"{_pm(st.elasticity_at_authority_rule, d)} (lambda=authority), "
               f"{_pm(st.elasticity_at_gdp_rule, d)} (lambda=gdp) per mille")
    out.append(f"stance: {st.stance} (threshold {threshold:g})")
    out.append("\nEffects on every country, d log pi_j / d log P_ii (per mille):")
    out.append(format_table(["country"] + [f"lambda={lab}" for lab in labels],
                            [(tm.codes[j], *(_pm(st.effects[lab][j], d) for lab in labels))
                             for j in rows_idx]))
    return "\n".join(out) + "\n"


def _corrupting_hook(values):
    return values * (1 + 1e-3) + 1e-6


def cmd_verify(config: RunConfig, seeds: int = 20, sizes=(3, 5, 10), dps=DEFAULT_DPS,
               corrupt: bool = False, verbose: bool = False) -> tuple[str, bool]:
    tm = load_matrix(config) if (config.trade_path or config.gdp_path) else None
    hook = _corrupting_hook if corrupt else None
    reports = verify_all(tm, None, seeds=range(seeds), sizes=sizes, dps=dps, hook=hook)
    summary = summarize(reports)
    ok = summary["failed"] == 0
    if config.output_format == "json":
        text = _json({"command": "verify", "year": config.year, "summary": summary,
                      "cases": [r.as_dict() for r in reports]})
    elif config.output_format == "csv":
        text = _csv(["label", "status", "h_used", "max_rel_err", "max_abs_err"],
                    [(r.label, r.as_dict()["status"], "" if r.h_used is None else r.h_used,
                      r.max_rel_err, r.max_abs_err) for r in reports])
    else:
        out = ["Finite-difference verification", ""]
        out.append(format_table(["cases", "checked", "skipped", "failed", "max rel err",
                                 "max abs err"],
                                [(summary["cases"], summary["checked"], summary["skipped"],
                                  summary["failed"], f"{summary['max_rel_err']:.2e}",
                                  f"{summary['max_abs_err']:.2e}")], aligns=[">"] * 6))
        shown = [r for r in reports if verbose or r.skipped or not r.passed]
        if shown:
            out.append("")
            out.append(format_table(
                ["case", "status", "max rel err", "max abs err", "note"],
                [(r.label, r.as_dict()["status"], f"{r.max_rel_err:.2e}",
                  f"{r.max_abs_err:.2e}", r.skipped or "") for r in shown],
                aligns=["<", "<", ">", ">", "<"]))
        out.append("\nresult: " + ("PASS" if ok else "FAIL"))
        text = "\n".join(out) + "\n"
    return text, ok


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    io_opts = common.add_argument_group("inputs")
    io_opts.add_argument("--trade", metavar="FILE", help="bilateral export CSV")
    io_opts.add_argument("--gdp", metavar="FILE", help="GDP CSV (iso3,gdp)")
    io_opts.add_argument("--aggregate", metavar="FILE", help="aggregation config ([groups])")
    io_opts.add_argument("--imports", metavar="FILE",
                         help="importer-declared mirror records (importer,exporter,value)")
    io_opts.add_argument("--mirror", choices=("reporter", "average"),
                         help="how to reconcile mirror records (default reporter)")
    io_opts.add_argument("--snapshot", choices=SNAPSHOTS, help="use a shipped data snapshot")
    io_opts.add_argument("--trade-columns", metavar="R,P,V", help="trade CSV column names")
    io_opts.add_argument("--gdp-columns", metavar="C,V", help="GDP CSV column names")
    io_opts.add_argument("--config", metavar="FILE", help="INI file with a [run] section")
    opts = common.add_argument_group("analysis")
    opts.add_argument("--year", help="period label for the output")
    opts.add_argument("--lambda", dest="lambda",
                      help="reaction rule: gdp, authority, midpoint or a number (default gdp)")
    opts.add_argument("--threshold", type=float,
                      help="significance bar for log-elasticities "
                           "(default 0.05 for trade wars, 0 for globalization)")
    out = common.add_argument_group("output")
    out.add_argument("--format", choices=("table", "csv", "json"))
    out.add_argument("--decimals", type=int, help="decimal places in tables (1..12)")
    out.add_argument("--order", help="comma-separated country codes for row order")

    parser = argparse.ArgumentParser(
        prog="counterbalance",
        description="Authority distribution of a trade network and its sensitivity "
                    "to trade wars and globalization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("authority", parents=[common], help="equilibrium authority distribution")
    p.add_argument("--ratios", action="store_true", help="also print the pi_j/pi_i / g_ji grid")

    p = sub.add_parser("tradewar", parents=[common], help="trade-war sensitivity report")
    p.add_argument("--actor", required=True)
    p.add_argument("--target", help="omit to rank every partner")

    p = sub.add_parser("globalization", parents=[common], help="globalization stance report")
    p.add_argument("--country", required=True)

    p = sub.add_parser("verify", parents=[common], help="finite-difference verification")
    p.add_argument("--seeds", type=int, default=20, help="random fixtures to check (default 20)")
    p.add_argument("--sizes", default="3,5,10", help="fixture sizes (default 3,5,10)")
    p.add_argument("--float", action="store_true",
                   help="solve the perturbed equilibria in double precision")
    p.add_argument("--all", action="store_true", help="list every case, not just failures")
    p.add_argument("--corrupt-analytic", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = make_config(args)
        if args.command == "authority":
            text = cmd_authority(config, args.ratios)
        elif args.command == "tradewar":
            text = cmd_tradewar(config, args.actor, args.target)
        elif args.command == "globalization":
            text = cmd_globalization(config, args.country)
        else:
            sizes = tuple(int(s) for s in args.sizes.split(","))
            text, ok = cmd_verify(config, args.seeds, sizes, None if args.float else DEFAULT_DPS,
                                  args.corrupt_analytic, args.all)
            sys.stdout.write(text)
            if not ok:
                raise VerificationFailure("analytic derivatives disagree with finite differences")
            return 0
    except CounterbalanceError as exc:
        print(f"counterbalance: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"counterbalance: error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
