"""Time the batch fit at several worker counts and check the outputs are identical.

    python3 scripts/bench_workers.py --workers 1 2 4
"""

import argparse
import hashlib
import io
import os

from portalchoice.batch import design_from_occasions, household_features, run_batch, write_fits
from portalchoice.choice_set import MarketDefinition
from portalchoice.config import Config
from portalchoice.ingest import build_panels
from portalchoice.synth import GeneratorSpec, simulate_panel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--households", type=int, default=500)
    ap.add_argument("--occasions", type=int, default=300)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    spec = GeneratorSpec(n_households=args.households, occasions_min=args.occasions,
                         occasions_max=args.occasions)
    sim = simulate_panel(spec)
    market = MarketDefinition(spec.alternatives, spec.reference)
    designs = []
    for panel in build_panels(sim.visits):
        feats = household_features(panel, market, 300)
        if feats.occasions:
            designs.append(design_from_occasions(panel.household_id, feats.occasions, market))

    print(f"{len(designs)} households, {os.cpu_count()} CPU(s) visible")
    config = Config()
    base = None
    for w in args.workers:
        run_batch(designs, config, workers=w)  # warm the pool
        best = min(run_batch(designs, config, workers=w).elapsed for _ in range(args.repeats))
        buf = io.StringIO()
        write_fits(run_batch(designs, config, workers=w), buf)
        digest = hashlib.sha256(buf.getvalue().encode()).hexdigest()[:16]
        base = base or best
        print(f"workers={w:2d}  {best:7.2f}s  speedup {base / best:5.2f}x  {len(designs) / best:7.1f} hh/s  sha256 {digest}")


if __name__ == "__main__":
    main()
