"""Market definition, household choice sets and design matrices."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from . import BRAND_PREFIX, COVARIATES
from .features import ChoiceOccasion
from .ingest import HouseholdPanel, VisitRecord


@dataclass(frozen=True)
class MarketDefinition:
    alternatives: tuple[str, ...]
    reference: str
    counts: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.alternatives) < 2:
            raise ValueError("a market needs at least two alternatives")
        if len(set(self.alternatives)) != len(self.alternatives):
            raise ValueError("market alternatives must be distinct")
        if self.reference not in self.alternatives:
            raise ValueError(f"reference {self.reference!r} is not a market alternative")

    def rank(self, site: str) -> int:
        return self.alternatives.index(site)


@dataclass(frozen=True)
class HouseholdChoiceSet:
    household_id: str
    alternatives: tuple[str, ...]
    base: Optional[str]
    local_base: bool = False

    @property
    def estimable(self) -> bool:
        return len(self.alternatives) >= 2


@dataclass(frozen=True)
class HouseholdDesign:
    """Per-occasion design blocks for one household.

    ``X`` has shape (T, J_i, p) with alternatives in ``alternatives``
    order and columns in ``layout`` order; ``chosen`` holds the index of
    the chosen alternative at each occasion.
    """

    household_id: str
    layout: tuple[str, ...]
    alternatives: tuple[str, ...]
    base: str
    local_base: bool
    X: np.ndarray
    chosen: np.ndarray

    @property
    def n_occasions(self) -> int:
        return self.X.shape[0]

    @property
    def n_params(self) -> int:
        return self.X.shape[2]


def select_market(
    visits: Iterable[VisitRecord], top_j: int, reference: Optional[str] = None
) -> MarketDefinition:
    """Top-``top_j`` sites by visit count; ties go to the lexicographically smaller id."""
    counts = Counter(v.site_id for v in visits)
    if len(counts) < top_j:
        raise ValueError(f"need at least {top_j} distinct sites, found {len(counts)}")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_j]
    alternatives = tuple(site for site, _ in ranked)
    return MarketDefinition(alternatives, reference or alternatives[0], tuple(c for _, c in ranked))


def choice_set_from_sites(household_id: str, visited, market: MarketDefinition) -> HouseholdChoiceSet:
    visited = set(visited)
    alts = tuple(a for a in market.alternatives if a in visited)
    if not alts:
        return HouseholdChoiceSet(household_id, (), None)
    if market.reference in visited:
        return HouseholdChoiceSet(household_id, alts, market.reference)
    return HouseholdChoiceSet(household_id, alts, min(alts), local_base=True)


def household_choice_set(panel: HouseholdPanel, market: MarketDefinition) -> HouseholdChoiceSet:
    """Market alternatives the household visited at least once, in market order.

    A household that never visited the reference gets the lexicographically
    first alternative of its own set as base and is marked ``local_base``.
    """
    return choice_set_from_sites(panel.household_id, (v.site_id for v in panel.visits), market)


def design_layout(alternatives: Sequence[str], base: str) -> tuple[str, ...]:
    return COVARIATES + tuple(BRAND_PREFIX + a for a in alternatives if a != base)


def assemble_design(
    occasions: Sequence[ChoiceOccasion], choice_set: HouseholdChoiceSet
) -> HouseholdDesign:
    alts = choice_set.alternatives
    if not alts:
        raise ValueError(f"household {choice_set.household_id}: empty choice set")
    layout = design_layout(alts, choice_set.base)
    n_cov = len(COVARIATES)
    J, p, T = len(alts), len(layout), len(occasions)
    X = np.zeros((T, J, p))
    chosen = np.empty(T, dtype=np.intp)
    pos = {a: i for i, a in enumerate(alts)}
    col = n_cov
    for a in alts:
        if a != choice_set.base:
            X[:, pos[a], col] = 1.0
            col += 1
    for t, occ in enumerate(occasions):
        for a, c in occ.covariates.items():
            j = pos.get(a)
            if j is None:
                raise ValueError(f"occasion covariates include {a!r} outside the household choice set")
            X[t, j, 0] = c.loyalty
            X[t, j, 1] = c.last_search_repeated
            X[t, j, 2] = c.ln_last_pages
            X[t, j, 3] = c.missing_data
        chosen[t] = pos[occ.chosen]
    return HouseholdDesign(
        choice_set.household_id, layout, alts, choice_set.base, choice_set.local_base, X, chosen,
    )


def write_market(market: MarketDefinition, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["rank", "site_id", "visits", "reference"])
    counts = market.counts or (0,) * len(market.alternatives)
    for i, (site, n) in enumerate(zip(market.alternatives, counts), start=1):
        writer.writerow([i, site, n, int(site == market.reference)])


def read_market(source: IO[str]) -> MarketDefinition:
    rows = sorted(csv.DictReader(source), key=lambda r: int(r["rank"]))
    refs = [r["site_id"] for r in rows if r["reference"].strip() == "1"]
    if len(refs) != 1:
        raise ValueError("market file must mark exactly one reference")
    return MarketDefinition(
        tuple(r["site_id"] for r in rows), refs[0], tuple(int(r["visits"]) for r in rows)
    )
