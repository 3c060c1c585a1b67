"""Estimation across all households and persistence of the fits table."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Sequence

from joblib import Parallel, delayed

from .choice_set import (
    HouseholdDesign,
    MarketDefinition,
    assemble_design,
    choice_set_from_sites,
    household_choice_set,
)
from .config import Config
from .features import (
    ChoiceOccasion,
    HouseholdAggregates,
    build_occasions,
    detect_repeated_searches,
    household_aggregates,
)
from .ingest import HouseholdPanel
from .logit import NON_ESTIMABLE, HouseholdFit, fit_household, significance

log = logging.getLogger(__name__)

LOCAL_BASE = "local_base"
DIVERGENT = "divergent"
NO_MARKET_VISITS = "no_market_visits"
TOO_FEW_OCCASIONS = "too_few_occasions"

FITS_COLUMNS = (
    "household_id", "variable", "coefficient", "se", "z", "significant",
    "flags", "loglik", "iterations", "converged",
)


@dataclass
class HouseholdFeatures:
    household_id: str
    alternatives: tuple[str, ...]
    occasions: list[ChoiceOccasion]
    aggregates: Optional[HouseholdAggregates]


@dataclass
class BatchResult:
    fits: dict[str, HouseholdFit]
    skipped: dict[str, str]
    elapsed: float = 0.0

    @property
    def households_per_second(self) -> float:
        n = len(self.fits) + len(self.skipped)
        return n / self.elapsed if self.elapsed > 0 else math.inf


def household_features(panel: HouseholdPanel, market: MarketDefinition, window: int) -> HouseholdFeatures:
    """Repeat flags over the full visit stream, then occasions over the household's choice set."""
    flags = detect_repeated_searches(panel, window, portals=set(market.alternatives))
    cs = household_choice_set(panel, market)
    if not cs.alternatives:
        return HouseholdFeatures(panel.household_id, (), [], None)
    occasions = build_occasions(panel, cs.alternatives, flags)
    return HouseholdFeatures(panel.household_id, cs.alternatives, occasions,
                             household_aggregates(occasions, market.alternatives))


def design_from_occasions(
    household_id: str, occasions: Sequence[ChoiceOccasion], market: MarketDefinition
) -> HouseholdDesign:
    if not occasions:
        raise ValueError(f"household {household_id}: no occasions")
    cs = choice_set_from_sites(household_id, occasions[0].covariates, market)
    return assemble_design(occasions, cs)


def _fit_one(design: HouseholdDesign, config: Config) -> tuple[str, Optional[HouseholdFit], Optional[str]]:
    hh = design.household_id
    if len(design.alternatives) < 2:
        return hh, None, NON_ESTIMABLE
    if design.n_occasions < design.n_params + config.min_occasions_margin:
        return hh, None, TOO_FEW_OCCASIONS
    try:
        fit = fit_household(design.X, design.chosen, layout=design.layout,
                            household_id=hh, config=config)
    except Exception as exc:  # one bad household must not abort the batch
        log.warning("household %s: fit failed: %s", hh, exc)
        return hh, None, f"error: {type(exc).__name__}: {exc}"
    if fit.beta is None:
        return hh, None, NON_ESTIMABLE
    if design.local_base:
        fit = dataclasses.replace(fit, flags=fit.flags | {LOCAL_BASE})
    return hh, fit, None


def _fit_chunk(designs: Sequence[HouseholdDesign], config: Config):
    return [_fit_one(d, config) for d in designs]


def run_batch(
    designs: Sequence[HouseholdDesign],
    config: Config = Config(),
    workers: Optional[int] = None,
    skipped: Optional[dict[str, str]] = None,
) -> BatchResult:
    """Fit every household; output is keyed and ordered by household id.

    ``skipped`` carries households already excluded upstream (for example,
    no visits to any market alternative) so the result covers the whole input.
    """
    workers = workers or config.workers
    start = time.perf_counter()
    if workers == 1 or len(designs) < 2:
        outcomes = _fit_chunk(designs, config)
    else:
        n_chunks = min(len(designs), workers * 8)
        chunks = [designs[i::n_chunks] for i in range(n_chunks)]
        parts = Parallel(n_jobs=workers, backend="loky")(
            delayed(_fit_chunk)(chunk, config) for chunk in chunks
        )
        outcomes = [o for part in parts for o in part]
    elapsed = time.perf_counter() - start

    fits: dict[str, HouseholdFit] = {}
    skip: dict[str, str] = dict(skipped or {})
    for hh, fit, reason in sorted(outcomes, key=lambda o: o[0]):
        if fit is None:
            skip[hh] = reason
        else:
            fits[hh] = fit
    return BatchResult(fits, dict(sorted(skip.items())), elapsed)


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def _fit_rows(fit: HouseholdFit, bound: float) -> list[list]:
    sig = significance(fit.beta, fit.se)
    z = fit.z
    base_flags = sorted(fit.flags)
    rows = []
    for k, var in enumerate(fit.layout):
        flags = base_flags + ([DIVERGENT] if abs(fit.beta[k]) >= bound else [])
        rows.append([
            fit.household_id, var, _fmt(fit.beta[k]),
            _fmt(fit.se[k]) if fit.se is not None else "",
            _fmt(z[k]) if z is not None else "",
            sig[k], "|".join(flags), _fmt(fit.loglik), fit.iterations,
            "true" if fit.converged else "false",
        ])
    return rows


def write_fits(result: BatchResult, out: IO[str], bound: float = Config.beta_bound) -> None:
    """One row per (household, coefficient); skipped households get one marker row."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(FITS_COLUMNS)
    for hh in sorted(set(result.fits) | set(result.skipped)):
        if hh in result.fits:
            writer.writerows(_fit_rows(result.fits[hh], bound))
        else:
            writer.writerow([hh, "", "", "", "", "", f"skipped:{result.skipped[hh]}", "", "", "false"])


@dataclass(frozen=True)
class CoefficientRecord:
    """One household's estimate of one variable, as read back from a fits table."""

    household_id: str
    variable: str
    coefficient: float
    se: Optional[float]
    divergent: bool
    local_base: bool


def _opt_float(text: str) -> Optional[float]:
    text = text.strip()
    return float(text) if text else None


def read_fit_records(source: IO[str]) -> tuple[list[CoefficientRecord], dict[str, str]]:
    reader = csv.DictReader(source)
    missing = [c for c in FITS_COLUMNS if c not in (reader.fieldnames or ())]
    if missing:
        raise ValueError(f"fits file missing column(s): {', '.join(missing)}")
    records: list[CoefficientRecord] = []
    skipped: dict[str, str] = {}
    for row in reader:
        flags = set(filter(None, row["flags"].split("|")))
        if not row["variable"]:
            reason = next((f.split(":", 1)[1] for f in flags if f.startswith("skipped:")), "skipped")
            skipped[row["household_id"]] = reason
            continue
        records.append(CoefficientRecord(
            row["household_id"], row["variable"], float(row["coefficient"]),
            _opt_float(row["se"]), DIVERGENT in flags, LOCAL_BASE in flags,
        ))
    return records, skipped


def fit_records(fits: Iterable[HouseholdFit], bound: float = Config.beta_bound) -> list[CoefficientRecord]:
    """In-memory equivalent of writing then reading a fits table."""
    out = []
    for fit in fits:
        for k, var in enumerate(fit.layout):
            out.append(CoefficientRecord(
                fit.household_id, var, float(fit.beta[k]),
                float(fit.se[k]) if fit.se is not None else None,
                bool(abs(fit.beta[k]) >= bound), LOCAL_BASE in fit.flags,
            ))
    return out
