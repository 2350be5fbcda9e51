import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from soilfusion.data_model import BAND_COLUMNS, DTHETA_COLUMN, MEASURED, Dataset
from soilfusion.errors import DimensionError, InsufficientDataError, SchemaError, UndefinedMetricError
from soilfusion.evaluation import correlate_plots, pearson, r2, rmse, run_experiment, train_test_split
from soilfusion.regression import ForestParams
from soilfusion.simulation import SimConfig, simulate_tdr

vec = arrays(np.float64, st.integers(3, 40), elements=st.floats(-1e3, 1e3))


def _ds(n, plots=None, dtheta=None, target=None, seed=0):
    rng = np.random.default_rng(seed)
    spectra = rng.random((n, len(BAND_COLUMNS)))
    schema = BAND_COLUMNS
    if dtheta is not None:
        spectra = np.column_stack([spectra, dtheta])
        schema = BAND_COLUMNS + (DTHETA_COLUMN,)
    return Dataset(
        plot_id=np.ones(n, dtype=int) if plots is None else plots,
        timestamp=np.arange(n),
        position_index=np.zeros(n, dtype=int),
        provenance=np.array([MEASURED] * n, dtype=object),
        features=spectra,
        target=rng.random(n) if target is None else target,
        schema=schema,
    )


def test_metric_examples():
    y = np.array([1.0, 2, 3])
    assert r2(y, y) == 1
    assert r2(y, np.full(3, 2.0)) == 0
    assert r2(y, [1, 2, 4]) == 0.5
    assert rmse(y, y) == 0
    assert rmse(y, y + 0.7) == pytest.approx(0.7, abs=1e-15)
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
    assert pearson(y, y) == 1
    assert pearson(y, -y) == -1
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.9820, abs=1e-4)


def test_metric_errors():
    with pytest.raises(UndefinedMetricError, match="zero variance"):
        r2([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedMetricError, match="undefined correlation"):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(DimensionError):
        rmse([1, 2], [1])
    with pytest.raises(InsufficientDataError):
        pearson([1], [1])


@settings(max_examples=100)
@given(vec, st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariance(a, alpha, beta):
    b = np.cos(a) + np.arange(a.size)
    if np.ptp(a) < 1e-6:
        return
    r = pearson(a, b)
    assert pearson(a, alpha * b + beta) == pytest.approx(r, abs=1e-9)
    assert pearson(a, -alpha * b + beta) == pytest.approx(-r, abs=1e-9)


@settings(max_examples=100)
@given(vec)
def test_r2_reference_points(y):
    if np.ptp(y) < 1e-6:
        return
    assert r2(y, y) == 1
    assert r2(y, np.full_like(y, y.mean())) == pytest.approx(0, abs=1e-12)
    assert r2(y, y * 0.5) == pytest.approx(oracles.r2(list(y), list(y * 0.5)), rel=1e-10, abs=1e-12)


@settings(max_examples=50)
@given(vec, vec)
def test_rmse_zero_iff_equal(a, b):
    n = min(a.size, b.size)
    a, b = a[:n], b[:n]
    assert (rmse(a, b) == 0) == bool(np.all(a == b))


@pytest.mark.parametrize("n,sizes", [(10, (5, 5)), (11, (6, 5)), (2, (1, 1))])
def test_split_sizes(n, sizes):
    tr, te = train_test_split(_ds(n), seed=0)
    assert (len(tr), len(te)) == sizes
    assert sorted(tr.timestamp.tolist() + te.timestamp.tolist()) == list(range(n))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 80), st.integers(0, 2**32 - 1), st.booleans())
def test_split_is_seeded_partition(n, seed, stratify):
    ds = _ds(n, plots=np.arange(n) % 3 + 1)
    tr, te = train_test_split(ds, seed, stratify=stratify)
    assert abs(len(tr) - len(te)) <= 1 and len(tr) == math.ceil(n / 2)
    assert sorted(tr.timestamp.tolist() + te.timestamp.tolist()) == list(range(n))
    tr2, _ = train_test_split(ds, seed, stratify=stratify)
    assert tr.timestamp.tolist() == tr2.timestamp.tolist()


def test_stratified_split_balances_plots():
    ds = _ds(40, plots=np.repeat([1, 2, 3, 4], 10))
    tr, _ = train_test_split(ds, 3, stratify=True)
    assert np.bincount(tr.plot_id)[1:].tolist() == [5, 5, 5, 5]


def test_split_rejects_tiny():
    with pytest.raises(InsufficientDataError):
        train_test_split(_ds(1), 0)


def test_correlate_examples():
    dth = np.array([0.0, 1, 2, 3, 5, 5, 5])
    theta = np.array([5.0, 6, 7, 8, 4, 4, 4])
    rep = correlate_plots(_ds(7, plots=np.array([1, 1, 1, 1, 2, 2, 2]), dtheta=dth, target=theta))
    assert rep.per_plot == {1: 1.0}
    assert "undefined" in rep.notes["2"]
    assert rep.overall == pytest.approx(oracles.pearson(list(dth), list(theta)), rel=1e-12)


def test_correlate_campaign_ordering(campaign, measured):
    r = correlate_plots(measured).per_plot
    assert r[1] > r[3] > abs(r[4]) and r[2] > r[3]


def test_target_equals_feature_case():
    rng = np.random.default_rng(1)
    ds = _ds(500, dtheta=rng.random(500))
    ds = Dataset(ds.plot_id, ds.timestamp, ds.position_index, ds.provenance, ds.features,
                 ds.features[:, 7].copy(), ds.schema)
    rep = run_experiment(ds, "baseline", seed=0, forest=ForestParams(n_trees=30))
    assert rep.r2 >= 0.9 and rep.fi_gpr is None


def test_experiment_reports(campaign, measured):
    forest = ForestParams(n_trees=20)
    base = run_experiment(measured, "baseline", 0, forest=forest)
    a1 = run_experiment(measured, "approach1", 0, forest=forest)
    assert base.n_train + base.n_test == len(measured)
    assert 0 <= a1.fi_gpr <= 1
    assert "fi_gpr" not in base.to_dict()
    sim, _ = simulate_tdr(measured, campaign.profiles, campaign.frames, SimConfig("interpolation"))
    a2 = run_experiment(sim, "approach2", 0, forest=forest, method="interpolation")
    assert "fi_gpr" not in a2.to_dict() and a2.pearson_all is not None
    with pytest.raises(SchemaError):
        run_experiment(sim, "approach1", 0)
    with pytest.raises(SchemaError):
        run_experiment(measured, "approach2", 0)
