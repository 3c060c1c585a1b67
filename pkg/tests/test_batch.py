import io

import numpy as np
import pytest

from portalchoice.batch import (
    DIVERGENT,
    FITS_COLUMNS,
    LOCAL_BASE,
    NO_MARKET_VISITS,
    TOO_FEW_OCCASIONS,
    design_from_occasions,
    fit_records,
    household_features,
    read_fit_records,
    run_batch,
    write_fits,
)
from portalchoice.choice_set import HouseholdDesign, MarketDefinition
from portalchoice.config import Config
from portalchoice.ingest import build_panels
from portalchoice.logit import NON_ESTIMABLE
from portalchoice.synth import GeneratorSpec, simulate_panel


def small_designs(n=24, occasions=60, seed=3):
    sim = simulate_panel(GeneratorSpec(n_households=n, occasions_min=occasions,
                                       occasions_max=occasions, n_alternatives=4, seed=seed))
    market = MarketDefinition(sim.spec.alternatives, sim.spec.reference)
    designs, skipped = [], {}
    for panel in build_panels(sim.visits):
        feats = household_features(panel, market, 300)
        if not feats.occasions:
            skipped[panel.household_id] = NO_MARKET_VISITS
            continue
        designs.append(design_from_occasions(panel.household_id, feats.occasions, market))
    return designs, skipped


def fits_text(result):
    buf = io.StringIO()
    write_fits(result, buf)
    return buf.getvalue()


def test_all_single_alternative_households_skipped():
    sim = simulate_panel(GeneratorSpec(n_households=5, occasions_min=20, occasions_max=20,
                                       n_alternatives=2, choice_set_min=1, reference_prob=1.0, seed=1))
    market = MarketDefinition(("portal01", "portal02", "portal03"), "portal01")
    designs = []
    for panel in build_panels(sim.visits):
        feats = household_features(panel, market, 300)
        designs.append(design_from_occasions(panel.household_id, feats.occasions, market))
    designs = [d for d in designs if len(d.alternatives) == 1]
    assert designs
    result = run_batch(designs)
    assert result.fits == {}
    assert set(result.skipped.values()) == {NON_ESTIMABLE}


def test_every_household_accounted_for():
    designs, skipped = small_designs()
    result = run_batch(designs, skipped=skipped)
    ids = {d.household_id for d in designs} | set(skipped)
    assert set(result.fits) | set(result.skipped) == ids
    assert not set(result.fits) & set(result.skipped)
    assert list(result.fits) == sorted(result.fits)


def test_too_few_occasions_skipped():
    designs, _ = small_designs(n=4, occasions=5)
    result = run_batch(designs)
    assert set(result.skipped.values()) <= {TOO_FEW_OCCASIONS, NON_ESTIMABLE}
    assert TOO_FEW_OCCASIONS in result.skipped.values()


def test_serial_and_parallel_identical():
    designs, skipped = small_designs(n=16)
    serial = fits_text(run_batch(designs, workers=1, skipped=skipped))
    parallel = fits_text(run_batch(designs, workers=3, skipped=skipped))
    assert serial == parallel


def test_input_order_does_not_matter():
    designs, _ = small_designs(n=10)
    assert fits_text(run_batch(designs)) == fits_text(run_batch(designs[::-1]))


def test_failing_household_is_isolated():
    designs, _ = small_designs(n=6)
    bad = designs[2]
    X = bad.X.copy()
    X[0, 0, 0] = np.nan
    designs[2] = type(bad)(bad.household_id, bad.layout, bad.alternatives, bad.base,
                           bad.local_base, X, bad.chosen)
    result = run_batch(designs)
    assert bad.household_id not in result.fits
    assert result.skipped[bad.household_id].startswith("error:")
    assert set(result.fits) == {d.household_id for d in designs} - {bad.household_id}


def test_local_base_flag_propagates():
    designs, _ = small_designs(n=40)
    result = run_batch(designs)
    local = {d.household_id for d in designs if d.local_base} & set(result.fits)
    assert local, "fixture should contain a household that never visited the reference"
    for hh in local:
        assert LOCAL_BASE in result.fits[hh].flags


def test_fits_file_round_trip():
    designs, skipped = small_designs(n=12)
    result = run_batch(designs, skipped=skipped)
    text = fits_text(result)
    assert text.splitlines()[0] == ",".join(FITS_COLUMNS)
    records, back_skipped = read_fit_records(io.StringIO(text))
    assert records == fit_records(result.fits.values())
    assert back_skipped == result.skipped


def test_divergent_marked_per_coefficient():
    X = np.zeros((40, 2, 1))
    X[:, 1, 0] = 1.0
    design = HouseholdDesign(
        "h", ("brand:B",), ("A", "B"), "A", False, X, np.ones(40, dtype=int))
    result = run_batch([design], config=Config(min_occasions_margin=2))
    records, _ = read_fit_records(io.StringIO(fits_text(result)))
    assert records[0].divergent
    assert DIVERGENT in fits_text(result)


def test_parse_missing_column():
    with pytest.raises(ValueError, match="coefficient"):
        read_fit_records(io.StringIO("household_id,variable\n"))
