"""Command-line entry point.

Exit status: 0 on success, 1 on bad input (unknown flags, missing files,
malformed tables, invalid config), 2 on internal failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analytics import (
    coefficient_vectors,
    correlate,
    read_aggregate_vectors,
    scatter_data,
    summarize_coefficients,
    variable_order,
    write_correlation,
    write_scatter,
    write_summary,
    write_summary_counts,
)
from .batch import (
    NO_MARKET_VISITS,
    design_from_occasions,
    household_features,
    read_fit_records,
    run_batch,
    write_fits,
)
from .choice_set import read_market, select_market, write_market
from .config import Config, ConfigError, load_config
from .features import read_occasions, write_aggregates, write_occasions
from .ingest import SchemaError, build_panels, parse_visits, write_visits
from .synth import GeneratorSpec, load_spec, simulate_panel, write_truth

log = logging.getLogger("portalchoice")


class InputError(Exception):
    """Bad user input; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _require(path: Optional[str], what: str = "input") -> Path:
    if path is None:
        raise InputError(f"missing {what} path")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} file not found: {p}")
    return p


def _open_out(path: str | Path):
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, "w", encoding="utf-8", newline="")


# stages; the pipeline subcommand calls these same functions in sequence

def stage_ingest(input_path: str, output: Optional[str], strict: bool) -> int:
    result = parse_visits(_require(input_path))
    for err in result.errors:
        print(str(err), file=sys.stderr)
    if strict and result.errors:
        raise InputError(f"{len(result.errors)} malformed row(s) in {input_path}")
    panels = build_panels(result.records)
    if output:
        with _open_out(output) as fh:
            write_visits(panels, fh)
    else:
        write_visits(panels, sys.stdout)
    log.info("ingested %d visits for %d households (%d row errors)",
             len(result.records), len(panels), len(result.errors))
    return 0


def stage_features(input_path: str, output: str, config: Config,
                   market_output: Optional[str] = None, aggregates: Optional[str] = None) -> int:
    result = parse_visits(_require(input_path))
    for err in result.errors:
        print(str(err), file=sys.stderr)
    panels = build_panels(result.records)
    market = select_market(result.records, config.top_j, config.reference)
    market_output = market_output or str(Path(output).with_name("market.csv"))
    with _open_out(market_output) as fh:
        write_market(market, fh)

    feats = [household_features(p, market, config.window_seconds) for p in panels]
    excluded = [f.household_id for f in feats if not f.occasions]
    for hh in excluded:
        log.warning("household %s excluded: %s", hh, NO_MARKET_VISITS)
    with _open_out(output) as fh:
        write_occasions((o for f in feats for o in f.occasions), fh)
    if aggregates:
        with _open_out(aggregates) as fh:
            write_aggregates([f.aggregates for f in feats if f.aggregates is not None],
                             market.alternatives, fh)
    log.info("built occasions for %d households over %d alternatives (reference %s)",
             len(feats) - len(excluded), len(market.alternatives), market.reference)
    return 0


def stage_fit(occasions_path: str, market_path: str, output: str, config: Config) -> int:
    with open(_require(market_path, "market"), encoding="utf-8", newline="") as fh:
        market = read_market(fh)
    with open(_require(occasions_path, "occasions"), encoding="utf-8", newline="") as fh:
        by_household = read_occasions(fh)
    designs = [design_from_occasions(hh, occs, market) for hh, occs in sorted(by_household.items())]
    result = run_batch(designs, config)
    with _open_out(output) as fh:
        write_fits(result, fh, bound=config.beta_bound)
    log.info("fitted %d households, skipped %d, %.1f households/s with %d worker(s)",
             len(result.fits), len(result.skipped), result.households_per_second, config.workers)
    return 0


def _market_order(market_path: Optional[str]):
    if not market_path:
        return None
    with open(_require(market_path, "market"), encoding="utf-8", newline="") as fh:
        return read_market(fh).alternatives


def _read_records(fits_path: str):
    with open(_require(fits_path, "fits"), encoding="utf-8", newline="") as fh:
        records, _ = read_fit_records(fh)
    return records


def stage_summarize(fits_path: str, out: str, counts: Optional[str] = None,
                    market_path: Optional[str] = None) -> int:
    summary = summarize_coefficients(_read_records(fits_path), _market_order(market_path))
    with _open_out(out) as fh:
        write_summary(summary, fh)
    if counts:
        with _open_out(counts) as fh:
            write_summary_counts(summary, fh)
    return 0


def stage_correlate(out: str, fits_path: Optional[str] = None, aggregates: Optional[str] = None,
                    market_path: Optional[str] = None) -> int:
    if (fits_path is None) == (aggregates is None):
        raise InputError("correlate needs exactly one of --fits or --aggregates")
    if fits_path is not None:
        records = _read_records(fits_path)
        vectors = coefficient_vectors(records, variable_order(records, _market_order(market_path)))
    else:
        with open(_require(aggregates, "aggregates"), encoding="utf-8", newline="") as fh:
            vectors = read_aggregate_vectors(fh)
    matrix = correlate(vectors)
    with _open_out(out) as fh:
        write_correlation(matrix, fh)
    return 0


def stage_scatter(fits_path: str, var_x: str, var_y: str, out: str, points: Optional[str]) -> int:
    pts = scatter_data(_read_records(fits_path), var_x, var_y)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_scatter(pts, var_x, var_y, out, points)
    log.info("scatter of %s vs %s: %d households", var_y, var_x, len(pts))
    return 0


def stage_simulate(spec_path: Optional[str], out: str, truth: str, seed: Optional[int]) -> int:
    spec = load_spec(_require(spec_path, "spec")) if spec_path else GeneratorSpec()
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    sim = simulate_panel(spec)
    with _open_out(out) as fh:
        write_visits(sim.visits, fh)
    with _open_out(truth) as fh:
        write_truth(sim.truth, fh)
    log.info("simulated %d visits for %d households", len(sim.visits), len(sim.truth))
    return 0


def stage_pipeline(input_path: str, out_dir: str, config: Config) -> int:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    stage_ingest(input_path, str(d / "panels.csv"), strict=False)
    stage_features(str(d / "panels.csv"), str(d / "occasions.csv"), config,
                   market_output=str(d / "market.csv"), aggregates=str(d / "aggregates.csv"))
    stage_fit(str(d / "occasions.csv"), str(d / "market.csv"), str(d / "fits.csv"), config)
    stage_summarize(str(d / "fits.csv"), str(d / "table3.csv"), str(d / "table3_counts.csv"),
                    str(d / "market.csv"))
    stage_correlate(str(d / "table4.csv"), fits_path=str(d / "fits.csv"), market_path=str(d / "market.csv"))
    stage_correlate(str(d / "table2.csv"), aggregates=str(d / "aggregates.csv"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file; flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="portalchoice", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="validate and canonically order a visit log")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="canonical panels CSV (default: stdout)")
    p.add_argument("--strict", action="store_true", help="exit 1 if any row is malformed")

    def market_flags(q):
        q.add_argument("--top-j", type=int, dest="top_j")
        q.add_argument("--reference")

    p = sub.add_parser("features", parents=[common], help="build choice occasions")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--window-seconds", type=int, dest="window_seconds")
    p.add_argument("--market-output", help="market file (default: market.csv beside --output)")
    p.add_argument("--aggregates", help="also write household aggregates here")
    market_flags(p)

    p = sub.add_parser("fit", parents=[common], help="per-household conditional logit")
    p.add_argument("--occasions", required=True)
    p.add_argument("--market", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--beta-bound", type=float, dest="beta_bound")
    p.add_argument("--max-iterations", type=int, dest="max_iterations")

    p = sub.add_parser("summarize", parents=[common], help="coefficient summary table")
    p.add_argument("--fits", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--counts", help="also write per-variable household/divergent counts")
    p.add_argument("--market", help="market file fixing brand-dummy order")

    p = sub.add_parser("correlate", parents=[common], help="pairwise correlation table")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--fits")
    src.add_argument("--aggregates")
    p.add_argument("--out", required=True)
    p.add_argument("--market", help="market file fixing brand-dummy order")

    p = sub.add_parser("scatter", parents=[common], help="scatterplot of two coefficients")
    p.add_argument("--fits", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--out", required=True, help="SVG output")
    p.add_argument("--points", help="CSV of plotted points")

    p = sub.add_parser("simulate", parents=[common], help="synthetic visits with known coefficients")
    p.add_argument("--spec", help="key = value generator spec (default: built-in)")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("pipeline", parents=[common], help="ingest, features, fit, summarize, correlate")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--window-seconds", type=int, dest="window_seconds")
    market_flags(p)
    return parser


def _config(args) -> Config:
    cfg = load_config(_require(args.config, "config") if args.config else None)
    overrides = {k: getattr(args, k, None) for k in
                 ("top_j", "reference", "window_seconds", "workers", "beta_bound", "max_iterations")}
    return cfg.replace(**overrides)


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "ingest":
        return stage_ingest(args.input, args.output, args.strict)
    if cmd == "simulate":
        return stage_simulate(args.spec, args.out, args.truth, args.seed)
    if cmd == "summarize":
        return stage_summarize(args.fits, args.out, args.counts, args.market)
    if cmd == "correlate":
        return stage_correlate(args.out, args.fits, args.aggregates, args.market)
    if cmd == "scatter":
        return stage_scatter(args.fits, args.x, args.y, args.out, args.points)
    config = _config(args)
    if cmd == "features":
        return stage_features(args.input, args.output, config, args.market_output, args.aggregates)
    if cmd == "fit":
        return stage_fit(args.occasions, args.market, args.output, config)
    if cmd == "pipeline":
        return stage_pipeline(args.input, args.out_dir, config)
    raise AssertionError(cmd)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING, force=True)
    try:
        return _dispatch(args)
    except (InputError, SchemaError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
