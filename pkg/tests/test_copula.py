from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import ks_2samp

from guardfed import copula
from guardfed.dataset import ColumnSchema, TabularDataset

COLS = ("x1", "x2", "x3")


def three_column_fixture(n=500, seed=11) -> TabularDataset:
    rng = np.random.default_rng(seed)
    x1 = rng.normal(40, 10, n)
    x2 = 0.7 * (x1 - 40) / 10 + rng.normal(0, 0.7, n)
    x3 = np.exp(0.4 * x2 + rng.normal(0, 0.5, n))
    return TabularDataset([ColumnSchema(c) for c in COLS], {"x1": x1, "x2": x2, "x3": x3}, "", "")


def fidelity(real: TabularDataset, synth: TabularDataset) -> tuple[list[float], float]:
    ks = [ks_2samp(real.columns[c], synth.columns[c]).statistic for c in COLS]
    a = np.corrcoef(np.column_stack([real.columns[c] for c in COLS]), rowvar=False)
    b = np.corrcoef(np.column_stack([synth.columns[c] for c in COLS]), rowvar=False)
    return ks, float(np.abs(a - b).max())


def test_fidelity_on_three_column_fixture():
    real = three_column_fixture()
    ks, dcorr = fidelity(real, copula.sample(copula.fit(real), 2000, seed=0).table)
    assert max(ks) <= 0.08
    assert dcorr <= 0.1


def test_numeric_marginal_midranks_and_clamp():
    m = copula.NumericMarginal(np.array([3.0, 1.0, 2.0, 2.0]))
    # sorted 1,2,2,3: ranks 1, 2.5, 2.5, 4 -> (rank - 0.5) / 4
    assert m.cdf([1.0, 2.0, 3.0]).tolist() == [0.125, 0.5, 0.875]
    assert m.cdf([-10.0, 10.0]).tolist() == [0.125, 0.875]
    assert m.ppf(np.array([0.125, 0.875])).tolist() == [1.0, 3.0]


def test_categorical_marginal_midpoints_and_inverse():
    m = copula.CategoricalMarginal(np.array(["b", "a", "a", "c"], dtype=object))
    # a: [0, .5), b: [.5, .75), c: [.75, 1]
    assert m.cdf(["a", "b", "c"]).tolist() == [0.25, 0.625, 0.875]
    assert m.ppf(np.array([0.0, 0.49, 0.5, 0.74, 0.99])).tolist() == ["a", "a", "b", "b", "c"]
    with pytest.raises(ValueError):
        m.cdf(["zzz"])


def test_categorical_round_trip_through_gaussian(toy_raw):
    model = copula.fit(toy_raw)
    for row in list(toy_raw.rows())[:20]:
        back = copula.inverse_from_gaussian(model, copula.transform_to_gaussian(model, row))
        for col, orig, rec in zip(model.schema, row, back):
            if col.kind == "categorical":
                assert rec == orig


def test_sampled_categories_follow_frequencies(toy_raw):
    model = copula.fit(toy_raw)
    synth = copula.sample(model, 4000, seed=1).table
    for name in ("edu", "race", "label"):
        real = toy_raw.columns[name]
        for cat in set(real.tolist()):
            assert abs(np.mean(synth.columns[name] == cat) - np.mean(real == cat)) < 0.04


def test_sampling_is_seeded(toy_raw):
    model = copula.fit(toy_raw)
    a = copula.sample(model, 50, seed=3).table
    b = copula.sample(model, 50, seed=3).table
    c = copula.sample(model, 50, seed=4).table
    assert all(np.array_equal(a.columns[k], b.columns[k]) for k in a.columns)
    assert not all(np.array_equal(a.columns[k], c.columns[k]) for k in a.columns)


def test_constant_column_falls_back_to_eigen_clipping():
    n = 40
    rng = np.random.default_rng(0)
    x = rng.normal(size=n)
    t = TabularDataset([ColumnSchema(c) for c in ("x", "y", "k")],
                       {"x": x, "y": x.copy(), "k": np.ones(n)}, "", "")
    model = copula.fit(t)
    synth = copula.sample(model, 100, seed=0).table
    assert np.all(synth.columns["k"] == 1.0)
    assert np.all(np.isfinite(synth.columns["y"]))


def test_model_json_round_trip(toy_raw):
    model = copula.fit(toy_raw)
    again = copula.CopulaModel.from_json(model.to_json())
    a = copula.sample(model, 30, seed=9).table
    b = copula.sample(again, 30, seed=9).table
    assert all(np.array_equal(a.columns[k], b.columns[k]) for k in a.columns)
    with pytest.raises(ValueError):
        copula.CopulaModel.from_json('{"format": "other", "version": 1}')


def test_root_plus_synth_sizes(toy_raw, tmp_path):
    root = toy_raw.take(range(40))
    out = copula.build_root_plus_synth(root, 0.04, 1000, seed=0)
    assert len(out) == 80 and out.is_synthetic.sum() == 40 and not out.is_synthetic[:40].any()
    only_root = copula.build_root_plus_synth(root, 0.0, 1000, seed=0)
    assert len(only_root) == 40
    out.to_csv(tmp_path / "s.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 81
    with pytest.raises(ValueError):
        copula.fit(toy_raw.take([0]))
