"""Cross-household summaries of the fitted coefficient vectors.

Divergent (bound-clamped) coefficients never enter means, standard
deviations or correlations. Brand dummies are only comparable across
households sharing the global reference as base, so households on a
local base contribute their behavioural coefficients but not their brand
dummies.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from . import BRAND_PREFIX, COVARIATES
from .batch import CoefficientRecord
from .logit import Z_95

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("variable", "mean", "se_of_mean", "sd", "pct_sig_pos", "pct_sig_neg")
COUNT_COLUMNS = ("variable", "n_households", "n_divergent")
SIGNIFICANCE_MARK = "a"
SIGNIFICANCE_NOTE = "# a: Significant at 95% confidence level."


@dataclass(frozen=True)
class VariableSummary:
    variable: str
    mean: float
    se_of_mean: float
    sd: float
    pct_sig_pos: float
    pct_sig_neg: float
    n_households: int
    n_divergent: int


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple[str, ...]
    r: np.ndarray
    significant: np.ndarray
    n: np.ndarray

    @property
    def available(self) -> np.ndarray:
        return ~np.isnan(self.r)


def _usable(rec: CoefficientRecord) -> bool:
    return not (rec.local_base and rec.variable.startswith(BRAND_PREFIX))


def variable_order(records: Iterable[CoefficientRecord], market: Optional[Sequence[str]] = None) -> list[str]:
    seen = list(dict.fromkeys(r.variable for r in records))
    if market is not None:
        brands = [BRAND_PREFIX + a for a in market if BRAND_PREFIX + a in seen]
    else:
        brands = [v for v in seen if v.startswith(BRAND_PREFIX)]
    covs = [v for v in COVARIATES if v in seen]
    other = [v for v in seen if v not in covs and v not in brands]
    return covs + other + brands


def summarize_coefficients(
    records: Sequence[CoefficientRecord], market: Optional[Sequence[str]] = None
) -> list[VariableSummary]:
    """Mean, SE of the mean, SD and significance shares per variable."""
    if not records:
        raise ValueError("no fitted coefficients to summarize")
    by_var: dict[str, list[CoefficientRecord]] = {}
    for rec in records:
        if _usable(rec):
            by_var.setdefault(rec.variable, []).append(rec)
    out = []
    for var in variable_order(records, market):
        recs = by_var.get(var)
        if not recs:
            log.warning("variable %s present in no usable fit; omitted", var)
            continue
        values = np.array([r.coefficient for r in recs if not r.divergent])
        n_div = sum(r.divergent for r in recs)
        n = len(values)
        mean = float(values.mean()) if n else math.nan
        sd = float(values.std(ddof=1)) if n > 1 else (0.0 if n == 1 else math.nan)
        se_mean = sd / math.sqrt(n) if n > 1 else math.nan
        total = len(recs)
        pos = sum(1 for r in recs if r.se and r.coefficient / r.se > Z_95)
        neg = sum(1 for r in recs if r.se and r.coefficient / r.se < -Z_95)
        out.append(VariableSummary(var, mean, se_mean, sd, 100.0 * pos / total,
                                   100.0 * neg / total, n, n_div))
    return out


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    y = np.asarray(y, dtype=float) - np.mean(y)
    denom = math.sqrt(float(x @ x) * float(y @ y))
    if denom == 0.0:
        return math.nan
    return float(np.clip((x @ y) / denom, -1.0, 1.0))


def pearson_significant(r: float, n: int, level: float = 0.95) -> bool:
    """Two-sided t-test of zero correlation with n - 2 degrees of freedom."""
    if n < 3 or math.isnan(r):
        return False
    if abs(r) >= 1.0:
        return True
    t = abs(r) * math.sqrt((n - 2) / (1.0 - r * r))
    return bool(t > stats.t.ppf(0.5 + level / 2, n - 2))


def correlate(vectors: Mapping[str, Mapping[str, float]], min_overlap: int = 3) -> CorrelationMatrix:
    """Pairwise-complete Pearson correlations between per-household vectors.

    Entries with fewer than ``min_overlap`` common households, or with a
    constant side, are NaN and never significant.
    """
    labels = tuple(vectors)
    k = len(labels)
    r = np.full((k, k), math.nan)
    sig = np.zeros((k, k), dtype=bool)
    n = np.zeros((k, k), dtype=int)
    for a in range(k):
        va = {h: v for h, v in vectors[labels[a]].items() if v is not None and math.isfinite(v)}
        n[a, a] = len(va)
        r[a, a] = 1.0
        for b in range(a):
            vb = vectors[labels[b]]
            common = sorted(h for h in va if h in vb and vb[h] is not None and math.isfinite(vb[h]))
            n[a, b] = n[b, a] = len(common)
            if len(common) < min_overlap:
                continue
            rab = pearson([va[h] for h in common], [vb[h] for h in common])
            r[a, b] = r[b, a] = rab
            sig[a, b] = sig[b, a] = pearson_significant(rab, len(common))
    return CorrelationMatrix(labels, r, sig, n)


def coefficient_vectors(
    records: Iterable[CoefficientRecord], variables: Optional[Sequence[str]] = None
) -> dict[str, dict[str, float]]:
    records = list(records)
    order = list(variables) if variables is not None else variable_order(records)
    out: dict[str, dict[str, float]] = {v: {} for v in order}
    for rec in records:
        if rec.divergent or not _usable(rec) or rec.variable not in out:
            continue
        out[rec.variable][rec.household_id] = rec.coefficient
    return {v: vals for v, vals in out.items() if vals}


def read_aggregate_vectors(source: IO[str]) -> dict[str, dict[str, float]]:
    reader = csv.DictReader(source)
    cols = [c for c in (reader.fieldnames or ()) if c != "household_id"]
    if "household_id" not in (reader.fieldnames or ()):
        raise ValueError("aggregates file needs a household_id column")
    out: dict[str, dict[str, float]] = {c: {} for c in cols}
    for row in reader:
        for c in cols:
            text = row[c].strip()
            if text:
                out[c][row["household_id"]] = float(text)
    return out


def scatter_data(
    records: Iterable[CoefficientRecord], var_x: str, var_y: str
) -> list[tuple[str, float, float]]:
    """(household, x, y) for every household with usable estimates of both variables."""
    vecs = coefficient_vectors(records)
    xs, ys = vecs.get(var_x, {}), vecs.get(var_y, {})
    common = sorted(set(xs) & set(ys))
    if not common:
        raise ValueError(f"no household has usable estimates of both {var_x} and {var_y}")
    return [(h, xs[h], ys[h]) for h in common]


def _num(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_summary(summary: Sequence[VariableSummary], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summary:
        writer.writerow([s.variable, _num(s.mean), _num(s.se_of_mean), _num(s.sd),
                         _num(s.pct_sig_pos), _num(s.pct_sig_neg)])


def write_summary_counts(summary: Sequence[VariableSummary], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COUNT_COLUMNS)
    for s in summary:
        writer.writerow([s.variable, s.n_households, s.n_divergent])


def write_correlation(matrix: CorrelationMatrix, out: IO[str], digits: int = 6) -> None:
    """Full symmetric matrix; significant cells carry a trailing 'a' mark."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([""] + list(matrix.labels))
    for a, label in enumerate(matrix.labels):
        row = [label]
        for b in range(len(matrix.labels)):
            rab = matrix.r[a, b]
            if math.isnan(rab):
                row.append("")
            else:
                cell = f"{rab:.{digits}f}"
                row.append(cell + SIGNIFICANCE_MARK if matrix.significant[a, b] else cell)
        writer.writerow(row)
    out.write(SIGNIFICANCE_NOTE + "\n")


def read_correlation(source: IO[str]) -> CorrelationMatrix:
    rows = [row for row in csv.reader(source) if row and not row[0].startswith("#")]
    labels = tuple(rows[0][1:])
    k = len(labels)
    r = np.full((k, k), math.nan)
    sig = np.zeros((k, k), dtype=bool)
    for a, row in enumerate(rows[1:]):
        for b, cell in enumerate(row[1:]):
            if cell:
                sig[a, b] = cell.endswith(SIGNIFICANCE_MARK)
                r[a, b] = float(cell.rstrip(SIGNIFICANCE_MARK))
    return CorrelationMatrix(labels, r, sig, np.zeros((k, k), dtype=int))


def write_scatter(
    points: Sequence[tuple[str, float, float]],
    var_x: str,
    var_y: str,
    svg_path: str | Path,
    points_path: Optional[str | Path] = None,
) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if points_path is not None:
        with open(points_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["household_id", var_x, var_y])
            for hh, x, y in points:
                writer.writerow([hh, repr(x), repr(y)])

    with matplotlib.rc_context({"svg.hashsalt": "portalchoice", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.scatter([p[1] for p in points], [p[2] for p in points], s=8, color="black")
        ax.set_xlabel(var_x)
        ax.set_ylabel(var_y)
        ax.set_title(f"{var_y} vs {var_x} (n={len(points)})")
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
