from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guardfed.dataset import (ColumnSchema, SchemaError, dirichlet_partition, encode,
                              extract_root, load_csv, load_manifest, split_train_test)

SCHEMA = [
    ColumnSchema("age", "numeric", "feature"),
    ColumnSchema("edu", "categorical", "feature"),
    ColumnSchema("race", "categorical", "sensitive"),
    ColumnSchema("label", "categorical", "label"),
]


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_drops_missing_and_binarizes(tmp_path):
    p = write(tmp_path, "age,edu,race,label\n30,hs,X,1\n?,hs,Y,0\n41,grad,Z,0\nabc,hs,X,1\n")
    data = load_csv(p, SCHEMA, sensitive_group1="X", sensitive_group0="*", label_positive="1")
    assert data.n_rows == 2
    assert data.dropped == 2
    assert data.sensitive.tolist() == [1, 0]
    assert data.labels.tolist() == [1, 0]
    assert data.columns["race"].tolist() == ["X", "Others"]


def test_load_rejects_non_binary_without_wildcard(tmp_path):
    p = write(tmp_path, "age,edu,race,label\n30,hs,X,1\n31,hs,Y,0\n41,grad,Z,0\n")
    with pytest.raises(SchemaError, match="exactly two"):
        load_csv(p, SCHEMA, sensitive_group1="X", label_positive="1")


def test_load_missing_column(tmp_path):
    p = write(tmp_path, "age,race,label\n30,X,1\n")
    with pytest.raises(SchemaError, match="missing columns"):
        load_csv(p, SCHEMA, sensitive_group1="X", label_positive="1")


def test_schema_needs_one_sensitive_and_label(tmp_path):
    p = write(tmp_path, "age,race,label\n30,X,1\n")
    with pytest.raises(SchemaError):
        load_csv(p, SCHEMA[:1] + SCHEMA[3:], sensitive_group1="X")


def test_manifest_errors_name_line(tmp_path):
    m = write(tmp_path, "csv = t.csv\ncolumn.age = numeric\n", "bad.manifest")
    with pytest.raises(SchemaError, match=r"bad.manifest:2"):
        load_manifest(m)


def test_toy_manifest(toy_raw):
    assert toy_raw.n_rows == 400
    assert set(toy_raw.sensitive.tolist()) == {0, 1}
    assert set(toy_raw.labels.tolist()) == {0, 1}


def test_encoder_zscores_and_onehots(toy_raw):
    data, enc = encode(toy_raw, np.arange(toy_raw.n_rows))
    age = data.features[:, enc.feature_names.index("age")]
    assert abs(age.mean()) < 1e-12 and abs(age.std() - 1) < 1e-12
    onehot = data.features[:, [i for i, n in enumerate(enc.feature_names) if n.startswith("edu=")]]
    assert np.all(onehot.sum(axis=1) == 1)
    # sensitive attribute is appended as the last input column
    assert np.array_equal(data.inputs[:, -1], data.sensitive)
    data.include_sensitive = False
    assert data.inputs.shape[1] == len(enc.feature_names)


def test_unseen_category_encodes_as_zero_block(toy_raw):
    data, enc = encode(toy_raw, np.arange(toy_raw.n_rows))
    other = toy_raw.take([0])
    other.columns["edu"] = np.array(["phd"], dtype=object)
    row = enc.transform(other).features[0]
    cols = [i for i, n in enumerate(enc.feature_names) if n.startswith("edu=")]
    assert np.all(row[cols] == 0)


def test_split_is_stratified_disjoint_and_deterministic(toy_raw):
    train, test = split_train_test(toy_raw, 0.25, seed=1)
    assert len(set(train) & set(test)) == 0
    assert len(train) + len(test) == toy_raw.n_rows
    cells = 2 * toy_raw.sensitive + toy_raw.labels
    for c in range(4):
        n = np.sum(cells == c)
        assert np.sum(cells[test] == c) == round(0.25 * n)
    t2, s2 = split_train_test(toy_raw, 0.25, seed=1)
    assert np.array_equal(train, t2) and np.array_equal(test, s2)


def test_extract_root_removes_rows_from_pool(toy_raw):
    train, _ = split_train_test(toy_raw, 0.2, seed=0)
    root, pool = extract_root(toy_raw, 0.1, seed=0, rows=train)
    assert set(root) | set(pool) == set(train)
    assert not set(root) & set(pool)
    with pytest.raises(ValueError):
        extract_root(toy_raw, 0.0001, seed=0, rows=train)


def test_partition_single_client():
    parts = dirichlet_partition(np.arange(50), np.arange(50) % 2, 1, 0.5, seed=0)
    assert len(parts) == 1 and np.array_equal(parts[0].indices, np.arange(50))


def test_partition_errors():
    with pytest.raises(ValueError):
        dirichlet_partition(np.arange(5), np.zeros(5), 10, 1.0)
    with pytest.raises(ValueError):
        dirichlet_partition(np.arange(50), np.zeros(50), 5, 0.0)


@settings(max_examples=60, deadline=None)
@given(n_clients=st.integers(1, 30), alpha=st.floats(0.05, 1e4), seed=st.integers(0, 2**31),
       extra=st.integers(0, 300))
def test_partition_disjoint_and_covering(n_clients, alpha, seed, extra):
    pool = np.arange(5, 5 + n_clients + extra)
    labels = np.random.default_rng(seed).integers(0, 2, pool.max() + 1)
    parts = dirichlet_partition(pool, labels, n_clients, alpha, seed)
    allidx = np.concatenate([p.indices for p in parts])
    assert sorted(allidx.tolist()) == pool.tolist()
    assert all(len(p) >= 1 for p in parts)
    assert [p.client_id for p in parts] == list(range(1, n_clients + 1))


def _label_dev(parts, labels):
    glob = labels.mean()
    return np.array([abs(labels[p.indices].mean() - glob) for p in parts])


def test_partition_iid_regime():
    # alpha = 5000: >= 95% of clients within 0.05 of the global label rate, over 20 seeds
    rng = np.random.default_rng(0)
    labels = (rng.random(20000) < 0.45).astype(int)
    pool = np.arange(labels.size)
    for seed in range(20):
        dev = _label_dev(dirichlet_partition(pool, labels, 100, 5000, seed), labels)
        assert np.mean(dev <= 0.05) >= 0.95


def test_partition_noniid_regime():
    # alpha = 5: some client deviates by more than 0.15 in >= 90% of seeds
    rng = np.random.default_rng(0)
    labels = (rng.random(20000) < 0.45).astype(int)
    pool = np.arange(labels.size)
    hits = sum(_label_dev(dirichlet_partition(pool, labels, 100, 5, seed), labels).max() > 0.15
               for seed in range(20))
    assert hits >= 18
