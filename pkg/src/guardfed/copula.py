"""Gaussian copula synthesis of tabular rows.

Each column gets an empirical marginal CDF. Rows are pushed through
``z = probit(F(x))``, the covariance of the z-matrix captures the dependence
structure, and new rows come from ``x = F^-1(Phi(z))`` with ``z ~ N(0, Sigma)``.
Sensitive and label columns are modelled as ordinary categorical columns so
synthetic rows carry their own ``(a, y)``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .dataset import CATEGORICAL, NUMERIC, ColumnSchema, TabularDataset

FORMAT_VERSION = 1
REGULARIZATION = 1e-6


def norm_cdf(z):
    return ndtr(z)


def norm_ppf(u):
    return ndtri(u)


class NumericMarginal:
    """Empirical CDF over sorted observations with (rank - 0.5) / r positions."""

    kind = NUMERIC

    def __init__(self, values: np.ndarray):
        self.values = np.sort(np.asarray(values, dtype=np.float64))
        r = self.values.size
        self.positions = (np.arange(1, r + 1) - 0.5) / r
        self.clamp = 1.0 / (2 * r)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        r = self.values.size
        below = np.searchsorted(self.values, x, side="left")
        upto = np.searchsorted(self.values, x, side="right")
        # Ties share the mid-rank position.
        u = (below + upto) / (2.0 * r)
        return np.clip(u, self.clamp, 1.0 - self.clamp)

    def ppf(self, u) -> np.ndarray:
        return np.interp(np.asarray(u, dtype=np.float64), self.positions, self.values)

    def to_dict(self) -> dict:
        return {"kind": NUMERIC, "values": self.values.tolist()}


class CategoricalMarginal:
    """Category frequencies laid out on [0, 1]; each value maps to its interval midpoint."""

    kind = CATEGORICAL

    def __init__(self, values: np.ndarray):
        cats, counts = np.unique(np.asarray(values, dtype=object).astype(str), return_counts=True)
        self._setup([str(c) for c in cats], counts)

    @classmethod
    def from_counts(cls, categories, counts) -> "CategoricalMarginal":
        self = cls.__new__(cls)
        self._setup(list(categories), np.asarray(counts))
        return self

    def _setup(self, categories, counts):
        self.categories = categories
        self.counts = np.asarray(counts, dtype=np.int64)
        self.freqs = counts / counts.sum()
        self.bounds = np.concatenate([[0.0], np.cumsum(self.freqs)])
        self.bounds[-1] = 1.0
        self._index = {c: i for i, c in enumerate(self.categories)}
        r = int(counts.sum())
        self.clamp = 1.0 / (2 * r)

    def cdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=object))
        try:
            idx = np.array([self._index[str(v)] for v in x], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"category {exc.args[0]!r} not seen at fit time") from None
        u = 0.5 * (self.bounds[idx] + self.bounds[idx + 1])
        return np.clip(u, self.clamp, 1.0 - self.clamp)

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        idx = np.searchsorted(self.bounds[1:-1], u, side="right")
        return np.array(self.categories, dtype=object)[idx]

    def to_dict(self) -> dict:
        return {"kind": CATEGORICAL, "categories": self.categories,
                "counts": self.counts.tolist()}


@dataclass
class CopulaModel:
    schema: list[ColumnSchema]
    marginals: list
    covariance: np.ndarray
    factor: np.ndarray
    positive_sensitive: str
    positive_label: str

    @property
    def scales(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def to_json(self) -> str:
        return json.dumps({
            "format": "guardfed-copula",
            "version": FORMAT_VERSION,
            "schema": [[c.name, c.kind, c.role] for c in self.schema],
            "marginals": [m.to_dict() for m in self.marginals],
            "covariance": self.covariance.tolist(),
            "positive_sensitive": self.positive_sensitive,
            "positive_label": self.positive_label,
        })

    @classmethod
    def from_json(cls, text: str) -> "CopulaModel":
        blob = json.loads(text)
        if blob.get("format") != "guardfed-copula" or blob.get("version") != FORMAT_VERSION:
            raise ValueError("unsupported copula model format")
        schema = [ColumnSchema(*c) for c in blob["schema"]]
        marginals = []
        for m in blob["marginals"]:
            if m["kind"] == NUMERIC:
                marginals.append(NumericMarginal(np.array(m["values"])))
            else:
                marginals.append(CategoricalMarginal.from_counts(m["categories"], m["counts"]))
        cov = np.array(blob["covariance"], dtype=np.float64)
        return cls(schema, marginals, cov, _factorize(cov), blob["positive_sensitive"],
                   blob["positive_label"])


@dataclass
class SyntheticDataset:
    """Root rows followed by sampled rows; ``is_synthetic`` marks provenance."""

    table: TabularDataset
    is_synthetic: np.ndarray

    def __len__(self) -> int:
        return self.table.n_rows

    def to_csv(self, path: str | Path) -> None:
        names = [c.name for c in self.table.schema]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(names + ["synthetic"])
            for row, synth in zip(self.table.rows(), self.is_synthetic):
                writer.writerow([*row, int(synth)])


def _factorize(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        vals = np.clip(vals, REGULARIZATION, None)
        return vecs * np.sqrt(vals)


def _marginal(values: np.ndarray, kind: str):
    return NumericMarginal(values) if kind == NUMERIC else CategoricalMarginal(values)


def _gaussianize(model_marginals, table: TabularDataset) -> np.ndarray:
    cols = [norm_ppf(m.cdf(table.columns[c.name])) for c, m in zip(table.schema, model_marginals)]
    return np.column_stack(cols)


def fit(root: TabularDataset) -> CopulaModel:
    if root.n_rows < 2:
        raise ValueError("copula fit needs at least 2 rows")
    if root.n_cols < 1:
        raise ValueError("copula fit needs at least 1 column")
    marginals = [_marginal(root.columns[c.name], c.kind) for c in root.schema]
    z = _gaussianize(marginals, root)
    cov = np.atleast_2d(np.cov(z, rowvar=False))
    cov = 0.5 * (cov + cov.T) + REGULARIZATION * np.eye(cov.shape[0])
    return CopulaModel(list(root.schema), marginals, cov, _factorize(cov),
                       root.positive_sensitive, root.positive_label)


def transform_to_gaussian(model: CopulaModel, row) -> np.ndarray:
    if len(row) != len(model.marginals):
        raise ValueError(f"row has {len(row)} values, model expects {len(model.marginals)}")
    return np.array([float(norm_ppf(m.cdf([v])[0])) for m, v in zip(model.marginals, row)])


def inverse_from_gaussian(model: CopulaModel, z: np.ndarray) -> list:
    """Map a z-vector back to data space; the sampling inverse without rescaling."""
    u = norm_cdf(np.asarray(z, dtype=np.float64))
    return [m.ppf(np.array([ui]))[0] for m, ui in zip(model.marginals, u)]


def sample(model: CopulaModel, m: int, seed: int = 0) -> SyntheticDataset:
    """Draw ``m`` rows.

    Draws are divided by each column's z-scale before ``Phi`` so the uniform
    marginals stay uniform even where ties and clamping shrank the fitted
    variance below one.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    d = model.covariance.shape[0]
    z = rng.standard_normal((m, d)) @ model.factor.T
    u = norm_cdf(z / model.scales)
    columns = {}
    for j, (col, marg) in enumerate(zip(model.schema, model.marginals)):
        vals = marg.ppf(u[:, j])
        columns[col.name] = vals.astype(np.float64) if col.kind == NUMERIC else vals.astype(object)
    table = TabularDataset(list(model.schema), columns, model.positive_sensitive,
                           model.positive_label)
    return SyntheticDataset(table, np.ones(m, dtype=bool))


def concat_tables(a: TabularDataset, b: TabularDataset) -> TabularDataset:
    columns = {k: np.concatenate([a.columns[k], b.columns[k]]) for k in a.columns}
    return replace(a, columns=columns, dropped=0)


def build_root_plus_synth(root: TabularDataset, synth_fraction_of_total: float,
                          total_train_size: int, seed: int = 0,
                          model: CopulaModel | None = None) -> SyntheticDataset:
    """Root rows plus ``round(synth_fraction_of_total * total_train_size)`` sampled rows."""
    if root.n_rows < 1:
        raise ValueError("root data is empty")
    m = int(round(synth_fraction_of_total * total_train_size))
    if m <= 0:
        return SyntheticDataset(root, np.zeros(root.n_rows, dtype=bool))
    model = model if model is not None else fit(root)
    synth = sample(model, m, seed)
    table = concat_tables(root, synth.table)
    flags = np.concatenate([np.zeros(root.n_rows, dtype=bool), synth.is_synthetic])
    return SyntheticDataset(table, flags)
