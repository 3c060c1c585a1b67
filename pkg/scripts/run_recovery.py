"""Simulate a panel, run the full pipeline on it, and report coefficient recovery.

    python3 scripts/run_recovery.py --households 500 --occasions 300 --out runs/recovery
"""

import argparse
import dataclasses
import time
from pathlib import Path

import numpy as np

from portalchoice.batch import design_from_occasions, read_fit_records
from portalchoice.choice_set import read_market
from portalchoice.cli import stage_pipeline
from portalchoice.config import Config
from portalchoice.features import read_occasions
from portalchoice.ingest import write_visits
from portalchoice.logit import Z_95
from portalchoice.synth import GeneratorSpec, load_spec, simulate_panel, true_coefficients, write_truth


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", help="generator spec file (key = value)")
    ap.add_argument("--households", type=int)
    ap.add_argument("--occasions", type=int)
    ap.add_argument("--alternatives", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/recovery")
    args = ap.parse_args()

    spec = load_spec(args.spec) if args.spec else GeneratorSpec()
    changes = {"n_households": args.households, "occasions_min": args.occasions,
               "occasions_max": args.occasions, "n_alternatives": args.alternatives, "seed": args.seed}
    spec = dataclasses.replace(spec, **{k: v for k, v in changes.items() if v is not None})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    sim = simulate_panel(spec)
    with open(out / "visits.csv", "w", newline="") as fh:
        write_visits(sim.visits, fh)
    with open(out / "truth.csv", "w", newline="") as fh:
        write_truth(sim.truth, fh)
    t1 = time.perf_counter()
    config = Config(top_j=spec.n_alternatives, reference=spec.reference, workers=args.workers)
    stage_pipeline(str(out / "visits.csv"), str(out), config)
    t2 = time.perf_counter()

    with open(out / "market.csv", newline="") as fh:
        market = read_market(fh)
    with open(out / "occasions.csv", newline="") as fh:
        occasions = read_occasions(fh)
    with open(out / "fits.csv", newline="") as fh:
        records, skipped = read_fit_records(fh)
    designs = {hh: design_from_occasions(hh, occ, market) for hh, occ in occasions.items()}
    truth_cache = {}
    rows = {}
    for r in records:
        d = designs[r.household_id]
        if r.household_id not in truth_cache:
            truth_cache[r.household_id] = dict(zip(d.layout, true_coefficients(sim.truth[r.household_id],
                                                                                d.layout, d.base)))
        if r.divergent or r.se is None:
            continue
        key = "brand dummies" if r.variable.startswith("brand:") else r.variable
        err = r.coefficient - truth_cache[r.household_id][r.variable]
        rows.setdefault(key, []).append((err, r.se))

    print(f"simulated {len(sim.visits)} visits in {t1 - t0:.1f}s; pipeline {t2 - t1:.1f}s")
    print(f"fitted {len({r.household_id for r in records})} households, skipped {len(skipped)}")
    print(f"{'variable':24s} {'n':>6s} {'bias':>9s} {'MAE':>8s} {'mean se':>8s} {'cover95':>8s}")
    for var, vals in rows.items():
        err, se = np.array(vals).T
        cover = np.mean(np.abs(err) <= Z_95 * se)
        print(f"{var:24s} {len(err):6d} {err.mean():9.4f} {np.abs(err).mean():8.4f} {se.mean():8.4f} {cover:8.3f}")


if __name__ == "__main__":
    main()
