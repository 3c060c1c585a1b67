"""Choice occasions and per-alternative covariates built from a household panel.

Every visit to a site in the household's choice set is one occasion. For
each alternative at each occasion we record whether it was chosen on the
previous occasion (loyalty), whether the search on the household's last
visit to it was repeated, the log page count of that last visit, and a
missing-data dummy for alternatives not visited yet.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Collection, Iterable, Optional, Sequence

from .ingest import HouseholdPanel

DEFAULT_WINDOW = 300

OCCASION_COLUMNS = (
    "household_id", "occasion_index", "alternative", "chosen",
    "loyalty", "last_search_repeated", "ln_last_pages", "missing_data",
)


@dataclass(frozen=True, slots=True)
class AlternativeCovariates:
    loyalty: int = 0
    last_search_repeated: int = 0
    ln_last_pages: float = 0.0
    missing_data: int = 1

    def as_tuple(self) -> tuple:
        return (self.loyalty, self.last_search_repeated, self.ln_last_pages, self.missing_data)


MISSING = AlternativeCovariates()


@dataclass(frozen=True)
class ChoiceOccasion:
    household_id: str
    occasion_index: int
    chosen: str
    covariates: dict[str, AlternativeCovariates]
    # attributes of the chosen visit itself, kept for household aggregates
    pages: int = 0
    repeated: int = 0


@dataclass(frozen=True)
class HouseholdAggregates:
    household_id: str
    total_pages: int
    avg_pages: float
    frac_repeated: float
    shares: dict[str, float]


def ln_pages(pages: int) -> float:
    """Log page count floored at one page, so 0- and 1-page visits give 0."""
    return math.log(max(pages, 1))


def detect_repeated_searches(
    panel: HouseholdPanel,
    window: int = DEFAULT_WINDOW,
    portals: Optional[Collection[str]] = None,
) -> list[int]:
    """Flag each visit whose search was repeated.

    A visit is flagged if a later visit with the same goal starts within
    ``window`` seconds of its start, or if the very next visit is to a
    portal and starts less than ``window`` seconds after this one ends.
    ``portals=None`` treats every site as a portal.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    visits = panel.visits
    n = len(visits)
    flags = [0] * n
    for i, v in enumerate(visits):
        if i + 1 < n:
            nxt = visits[i + 1]
            is_portal = portals is None or nxt.site_id in portals
            if is_portal and nxt.start_time - v.end_time < window:
                flags[i] = 1
                continue
        if v.goal_id is None:
            continue
        for w in visits[i + 1:]:
            if w.start_time - v.start_time > window:
                break
            if w.goal_id == v.goal_id:
                flags[i] = 1
                break
    return flags


def build_occasions(
    panel: HouseholdPanel,
    choice_set: Sequence[str],
    repeated_flags: Sequence[int],
) -> list[ChoiceOccasion]:
    if not choice_set:
        raise ValueError(f"household {panel.household_id}: empty choice set")
    if len(repeated_flags) != len(panel.visits):
        raise ValueError("repeated_flags must align with panel visits")
    members = set(choice_set)
    # alternative -> (repeated flag, ln pages) of the most recent visit to it
    last: dict[str, tuple[int, float]] = {}
    previous: Optional[str] = None
    occasions: list[ChoiceOccasion] = []
    for visit, flag in zip(panel.visits, repeated_flags):
        site = visit.site_id
        if site not in members:
            continue
        covs = {}
        for alt in choice_set:
            seen = last.get(alt)
            if seen is None:
                covs[alt] = MISSING
            else:
                covs[alt] = AlternativeCovariates(int(alt == previous), seen[0], seen[1], 0)
        occasions.append(ChoiceOccasion(
            panel.household_id, len(occasions) + 1, site, covs, visit.pages, int(flag),
        ))
        last[site] = (int(flag), ln_pages(visit.pages))
        previous = site
    return occasions


def household_aggregates(
    occasions: Sequence[ChoiceOccasion], alternatives: Iterable[str]
) -> HouseholdAggregates:
    """Household-level totals used for the aggregate correlation table."""
    if not occasions:
        raise ValueError("no occasions")
    n = len(occasions)
    total = sum(o.pages for o in occasions)
    counts: dict[str, int] = defaultdict(int)
    for o in occasions:
        counts[o.chosen] += 1
    shares = {alt: counts.get(alt, 0) / n for alt in alternatives}
    return HouseholdAggregates(
        household_id=occasions[0].household_id,
        total_pages=total,
        avg_pages=total / n,
        frac_repeated=sum(o.repeated for o in occasions) / n,
        shares=shares,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_occasions(occasions: Iterable[ChoiceOccasion], out: IO[str], header: bool = True) -> None:
    """Long format: one row per (occasion, alternative)."""
    writer = csv.writer(out, lineterminator="\n")
    if header:
        writer.writerow(OCCASION_COLUMNS)
    for occ in occasions:
        for alt, c in occ.covariates.items():
            writer.writerow([
                occ.household_id, occ.occasion_index, alt, int(alt == occ.chosen),
                c.loyalty, c.last_search_repeated, _fmt(c.ln_last_pages), c.missing_data,
            ])


def read_occasions(source: IO[str]) -> dict[str, list[ChoiceOccasion]]:
    """Inverse of :func:`write_occasions`, grouped by household in file order."""
    reader = csv.DictReader(source)
    missing = [c for c in OCCASION_COLUMNS if c not in (reader.fieldnames or ())]
    if missing:
        raise ValueError(f"occasions file missing column(s): {', '.join(missing)}")
    rows: dict[tuple[str, int], dict] = {}
    order: list[tuple[str, int]] = []
    for row in reader:
        key = (row["household_id"], int(row["occasion_index"]))
        slot = rows.get(key)
        if slot is None:
            slot = rows[key] = {"chosen": None, "covs": {}}
            order.append(key)
        alt = row["alternative"]
        slot["covs"][alt] = AlternativeCovariates(
            int(row["loyalty"]), int(row["last_search_repeated"]),
            float(row["ln_last_pages"]), int(row["missing_data"]),
        )
        if row["chosen"].strip() == "1":
            if slot["chosen"] is not None:
                raise ValueError(f"household {key[0]} occasion {key[1]}: more than one chosen row")
            slot["chosen"] = alt
    out: dict[str, list[ChoiceOccasion]] = defaultdict(list)
    for key in order:
        slot = rows[key]
        if slot["chosen"] is None:
            raise ValueError(f"household {key[0]} occasion {key[1]}: no chosen row")
        out[key[0]].append(ChoiceOccasion(key[0], key[1], slot["chosen"], slot["covs"]))
    for occs in out.values():
        occs.sort(key=lambda o: o.occasion_index)
    return dict(out)


def write_aggregates(aggs: Sequence[HouseholdAggregates], alternatives: Sequence[str], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["household_id", "total_pages", "avg_pages", "frac_repeated"]
                    + [f"share:{a}" for a in alternatives])
    for a in aggs:
        writer.writerow([a.household_id, a.total_pages, _fmt(a.avg_pages), _fmt(a.frac_repeated)]
                        + [_fmt(a.shares.get(alt, 0.0)) for alt in alternatives])
