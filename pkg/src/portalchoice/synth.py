"""Synthetic clickstream panels drawn from known household coefficients.

Each household gets its own coefficient vector and choice set, then makes
a sequence of portal choices from logit probabilities built with exactly
the covariate rules used by :mod:`portalchoice.features`. Visits are spaced
``spacing_seconds`` apart. When a search is meant to be repeated, the
portal visit is followed ``repeat_offset_seconds`` later by a same-goal
visit to a non-portal search site, which the repeat detector picks up.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import IO, Mapping, Optional, Sequence

import numpy as np

from . import BRAND_PREFIX, COVARIATES
from .config import ConfigError, coerce_fields, read_keyvalue
from .features import MISSING, AlternativeCovariates, ChoiceOccasion, ln_pages
from .ingest import VisitRecord

MAX_VISIT_SECONDS = 100


@dataclass(frozen=True)
class GeneratorSpec:
    n_households: int = 500
    occasions_min: int = 300
    occasions_max: int = 300
    n_alternatives: int = 5
    choice_set_min: int = 2
    reference_prob: float = 0.9
    brand_mean: float = -0.8
    brand_sd: float = 0.6
    loyalty_mean: float = 1.0
    loyalty_sd: float = 0.5
    repeated_mean: float = -0.4
    repeated_sd: float = 0.3
    ln_pages_mean: float = 0.1
    ln_pages_sd: float = 0.2
    missing_mean: float = -0.5
    missing_sd: float = 0.5
    pages_mean: float = 3.0
    repeat_prob: float = 0.25
    spacing_seconds: int = 600
    repeat_offset_seconds: int = 120
    n_goals: int = 100
    start_time: int = 946684800
    seed: int = 0

    def __post_init__(self):
        sds = [f.name for f in fields(self) if f.name.endswith("_sd")]
        bad = [name for name in sds if getattr(self, name) < 0]
        if bad:
            raise ConfigError(f"standard deviations must be >= 0: {', '.join(bad)}")
        if self.n_alternatives < 2:
            raise ConfigError("n_alternatives must be >= 2")
        if not 1 <= self.choice_set_min <= self.n_alternatives:
            raise ConfigError("choice_set_min must lie in [1, n_alternatives]")
        if not 1 <= self.occasions_min <= self.occasions_max:
            raise ConfigError("need 1 <= occasions_min <= occasions_max")
        if not 0 <= self.repeat_prob <= 1 or not 0 <= self.reference_prob <= 1:
            raise ConfigError("probabilities must lie in [0, 1]")
        if self.pages_mean <= 0 or self.n_goals < 1 or self.n_households < 0:
            raise ConfigError("pages_mean and n_goals must be positive")
        if not MAX_VISIT_SECONDS < self.repeat_offset_seconds < self.spacing_seconds - MAX_VISIT_SECONDS:
            raise ConfigError("repeat_offset_seconds must leave room for the visit before and after it")

    @property
    def alternatives(self) -> tuple[str, ...]:
        return tuple(f"portal{k:02d}" for k in range(1, self.n_alternatives + 1))

    @property
    def reference(self) -> str:
        return self.alternatives[0]


@dataclass
class Simulation:
    spec: GeneratorSpec
    visits: list[VisitRecord]
    truth: dict[str, dict[str, float]]
    occasions: dict[str, list[ChoiceOccasion]]


def load_spec(path: str | Path) -> GeneratorSpec:
    return GeneratorSpec(**coerce_fields(GeneratorSpec, read_keyvalue(path), source=str(path)))


def _draw_choice_set(rng: np.random.Generator, spec: GeneratorSpec) -> tuple[str, ...]:
    alts = spec.alternatives
    size = int(rng.integers(spec.choice_set_min, spec.n_alternatives + 1))
    others = list(alts[1:])
    if rng.random() < spec.reference_prob or size > len(others):
        picked = [alts[0]] + list(rng.choice(others, size - 1, replace=False))
    else:
        picked = list(rng.choice(others, size, replace=False))
    return tuple(a for a in alts if a in picked)


def _simulate_household(index: int, seed_seq: np.random.SeedSequence, spec: GeneratorSpec):
    rng = np.random.default_rng(seed_seq)
    hh = f"hh{index:05d}"
    choice_set = _draw_choice_set(rng, spec)
    coef = {
        "loyalty": rng.normal(spec.loyalty_mean, spec.loyalty_sd),
        "last_search_repeated": rng.normal(spec.repeated_mean, spec.repeated_sd),
        "ln_last_pages": rng.normal(spec.ln_pages_mean, spec.ln_pages_sd),
        "missing_data": rng.normal(spec.missing_mean, spec.missing_sd),
    }
    intercept = {a: 0.0 if a == spec.reference else rng.normal(spec.brand_mean, spec.brand_sd)
                 for a in choice_set}
    truth = {k: float(v) for k, v in coef.items()}
    truth.update({BRAND_PREFIX + a: float(v) for a, v in intercept.items()})

    n_occ = int(rng.integers(spec.occasions_min, spec.occasions_max + 1))
    weights = np.array([coef[name] for name in COVARIATES])
    base_u = np.array([intercept[a] for a in choice_set])
    last: dict[str, tuple[int, float]] = {}
    previous: Optional[str] = None
    visits: list[VisitRecord] = []
    occasions: list[ChoiceOccasion] = []
    for t in range(n_occ):
        covs = {}
        for a in choice_set:
            seen = last.get(a)
            covs[a] = MISSING if seen is None else AlternativeCovariates(int(a == previous), seen[0], seen[1], 0)
        X = np.array([covs[a].as_tuple() for a in choice_set], dtype=float)
        u = base_u + X @ weights
        prob = np.exp(u - u.max())
        prob /= prob.sum()
        j = min(int(np.searchsorted(np.cumsum(prob), rng.random() * prob.sum(), side="right")),
                len(choice_set) - 1)
        site = choice_set[j]
        pages = int(rng.geometric(1.0 / (1.0 + spec.pages_mean))) - 1
        repeated = int(rng.random() < spec.repeat_prob)
        goal = int(rng.integers(spec.n_goals))

        start = spec.start_time + t * spec.spacing_seconds
        visits.append(VisitRecord(hh, site, start, start + min(10 * pages, MAX_VISIT_SECONDS),
                                  pages, f"goal{goal:03d}"))
        if repeated:
            retry = start + spec.repeat_offset_seconds
            visits.append(VisitRecord(hh, f"search{goal:03d}", retry, retry + 10, 1, f"goal{goal:03d}"))
        occasions.append(ChoiceOccasion(hh, t + 1, site, covs, pages, repeated))
        last[site] = (repeated, ln_pages(pages))
        previous = site
    return hh, visits, truth, occasions


def simulate_panel(spec: GeneratorSpec) -> Simulation:
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_households)
    visits: list[VisitRecord] = []
    truth: dict[str, dict[str, float]] = {}
    occasions: dict[str, list[ChoiceOccasion]] = {}
    for i, child in enumerate(children):
        hh, v, tr, occ = _simulate_household(i, child, spec)
        visits.extend(v)
        truth[hh] = tr
        occasions[hh] = occ
    visits = [VisitRecord(v.household_id, v.site_id, v.start_time, v.end_time, v.pages, v.goal_id, seq=i)
              for i, v in enumerate(visits)]
    return Simulation(spec, visits, truth, occasions)


def true_coefficients(truth: Mapping[str, float], layout: Sequence[str], base: str) -> np.ndarray:
    """Express a household's true coefficients in an estimation layout.

    Brand intercepts are stored relative to the global reference; a fit on
    base ``base`` estimates differences against that base instead.
    """
    base_level = truth[BRAND_PREFIX + base]
    out = []
    for var in layout:
        if var.startswith(BRAND_PREFIX):
            out.append(truth[var] - base_level)
        else:
            out.append(truth[var])
    return np.array(out)


def write_truth(truth: Mapping[str, Mapping[str, float]], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["household_id", "variable", "value"])
    for hh in sorted(truth):
        for var, value in truth[hh].items():
            writer.writerow([hh, var, repr(value)])


def read_truth(source: IO[str]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for row in csv.DictReader(source):
        out.setdefault(row["household_id"], {})[row["variable"]] = float(row["value"])
    return out


def write_spec(spec: GeneratorSpec, out: IO[str]) -> None:
    for key, value in asdict(spec).items():
        out.write(f"{key} = {value}\n")
