"""Tabular dataset loading, encoding, splitting and client partitioning.

Datasets are described by a small key-value manifest next to the CSV::

    name = compas
    csv = compas.csv
    missing_values = ?
    column.age = numeric feature
    column.race = categorical sensitive
    column.two_year_recid = categorical label
    sensitive.group1 = African-American
    sensitive.group0 = *
    label.positive = 0
    accuracy_threshold = 0.60

``sensitive.group1`` names the raw value mapped to ``a = 1``; ``group0 = *``
collapses every other value into the ``a = 0`` group. Without a wildcard the
sensitive and label columns must already hold exactly two values.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
FEATURE = "feature"
SENSITIVE = "sensitive"
LABEL = "label"

OTHERS = "Others"


class SchemaError(ValueError):
    """Raised when a CSV or manifest does not fit the declared schema."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str = NUMERIC
    role: str = FEATURE

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in (FEATURE, SENSITIVE, LABEL):
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")


def check_schema(schema: Sequence[ColumnSchema]) -> None:
    roles = [c.role for c in schema]
    if roles.count(SENSITIVE) != 1:
        raise SchemaError("schema needs exactly one sensitive column")
    if roles.count(LABEL) != 1:
        raise SchemaError("schema needs exactly one label column")
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")


@dataclass
class TabularDataset:
    """Raw table: one array per column, in schema order.

    Numeric columns are float64 arrays, categorical ones are object arrays of
    strings. ``positive_sensitive`` / ``positive_label`` are the raw values
    that become ``a = 1`` / ``y = 1``.
    """

    schema: list[ColumnSchema]
    columns: dict[str, np.ndarray]
    positive_sensitive: str
    positive_label: str
    dropped: int = 0

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def n_cols(self) -> int:
        return len(self.schema)

    def column(self, role: str) -> ColumnSchema:
        return next(c for c in self.schema if c.role == role)

    @property
    def sensitive(self) -> np.ndarray:
        col = self.columns[self.column(SENSITIVE).name]
        return (col == self.positive_sensitive).astype(np.int8)

    @property
    def labels(self) -> np.ndarray:
        col = self.columns[self.column(LABEL).name]
        return (col == self.positive_label).astype(np.int8)

    def take(self, idx: Iterable[int]) -> "TabularDataset":
        idx = np.asarray(list(idx) if not isinstance(idx, np.ndarray) else idx, dtype=np.int64)
        return replace(self, columns={k: v[idx] for k, v in self.columns.items()}, dropped=0)

    def rows(self):
        names = [c.name for c in self.schema]
        for i in range(self.n_rows):
            yield tuple(self.columns[n][i] for n in names)


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    csv_path: Path
    schema: list[ColumnSchema]
    sensitive_group1: str
    sensitive_group0: str | None = None
    label_positive: str | None = None
    missing_values: tuple[str, ...] = ("", "?", "NA")
    accuracy_threshold: float = 0.5


def _parse_kv(text: str, source: str) -> list[tuple[int, str, str]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        out.append((lineno, key, value))
    return out


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    entries = _parse_kv(path.read_text(encoding="utf-8"), str(path))
    schema: list[ColumnSchema] = []
    opts: dict[str, str] = {}
    for lineno, key, value in entries:
        if key.startswith("column."):
            parts = value.split()
            if len(parts) != 2:
                raise SchemaError(f"{path}:{lineno}: column spec must be '<kind> <role>'")
            try:
                schema.append(ColumnSchema(key[len("column."):], parts[0], parts[1]))
            except SchemaError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
        else:
            opts[key] = value
    check_schema(schema)
    known = {"name", "csv", "missing_values", "sensitive.group1", "sensitive.group0",
             "label.positive", "accuracy_threshold"}
    unknown = set(opts) - known
    if unknown:
        raise SchemaError(f"{path}: unknown manifest keys {sorted(unknown)}")
    if "csv" not in opts or "sensitive.group1" not in opts:
        raise SchemaError(f"{path}: 'csv' and 'sensitive.group1' are required")
    missing = tuple(v.strip() for v in opts.get("missing_values", "?").split(","))
    return DatasetManifest(
        name=opts.get("name", path.stem),
        csv_path=(path.parent / opts["csv"]).resolve(),
        schema=schema,
        sensitive_group1=opts["sensitive.group1"],
        sensitive_group0=opts.get("sensitive.group0"),
        label_positive=opts.get("label.positive"),
        missing_values=missing + ("",),
        accuracy_threshold=float(opts.get("accuracy_threshold", 0.5)),
    )


def load_csv(
    path: str | Path,
    schema: Sequence[ColumnSchema],
    *,
    sensitive_group1: str | None = None,
    sensitive_group0: str | None = None,
    label_positive: str | None = None,
    missing_values: Sequence[str] = ("", "?", "NA"),
) -> TabularDataset:
    """Read ``path`` and keep the schema columns.

    Rows with a missing or unparsable value are dropped and counted in
    ``TabularDataset.dropped``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    schema = list(schema)
    check_schema(schema)
    missing = set(missing_values)

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        lookup = {h: i for i, h in enumerate(header)}
        absent = [c.name for c in schema if c.name not in lookup]
        if absent:
            raise SchemaError(f"{path}: missing columns {absent}")
        positions = [lookup[c.name] for c in schema]
        kept: list[list] = [[] for _ in schema]
        dropped = 0
        for record in reader:
            if not record:
                continue
            values = []
            ok = len(record) == len(header)
            for col, pos in zip(schema, positions):
                if not ok:
                    break
                v = record[pos].strip()
                if v in missing:
                    ok = False
                    break
                if col.kind == NUMERIC:
                    try:
                        v = float(v)
                    except ValueError:
                        ok = False
                        break
                    if not np.isfinite(v):
                        ok = False
                        break
                values.append(v)
            if not ok:
                dropped += 1
                continue
            for store, v in zip(kept, values):
                store.append(v)

    columns = {}
    for col, store in zip(schema, kept):
        dtype = np.float64 if col.kind == NUMERIC else object
        columns[col.name] = np.array(store, dtype=dtype)
    if dropped:
        logger.info("%s: dropped %d malformed rows", path.name, dropped)

    sens = next(c for c in schema if c.role == SENSITIVE)
    lab = next(c for c in schema if c.role == LABEL)
    columns[sens.name] = _binarize(columns[sens.name], sens.name, sensitive_group1, sensitive_group0)
    columns[lab.name] = _binarize(columns[lab.name], lab.name, label_positive, None)

    pos_sens = _as_key(sensitive_group1) if sensitive_group1 is not None else _second(columns[sens.name])
    pos_lab = _as_key(label_positive) if label_positive is not None else _second(columns[lab.name])
    return TabularDataset(schema, columns, pos_sens, pos_lab, dropped)


def _as_key(value) -> str:
    return str(value)


def _second(values: np.ndarray) -> str:
    return sorted(set(values.tolist()))[-1]


def _binarize(values: np.ndarray, name: str, group1: str | None, group0: str | None) -> np.ndarray:
    # Binary roles are stored as strings so numeric codes (0/1) compare cleanly.
    as_text = np.array([_fmt(v) for v in values], dtype=object)
    if group0 == "*":
        if group1 is None:
            raise SchemaError(f"column {name!r}: wildcard group needs a named group1")
        return np.where(as_text == group1, group1, OTHERS).astype(object)
    distinct = set(as_text.tolist())
    if len(distinct) != 2:
        raise SchemaError(f"column {name!r} must take exactly two values, found {len(distinct)}")
    if group1 is not None and group1 not in distinct:
        raise SchemaError(f"column {name!r}: value {group1!r} not present")
    return as_text


def _fmt(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def load_from_manifest(manifest: DatasetManifest) -> TabularDataset:
    return load_csv(
        manifest.csv_path,
        manifest.schema,
        sensitive_group1=manifest.sensitive_group1,
        sensitive_group0=manifest.sensitive_group0,
        label_positive=manifest.label_positive,
        missing_values=manifest.missing_values,
    )


# -- encoding ---------------------------------------------------------------


@dataclass
class Encoder:
    """Fitted column transforms: z-score for numerics, one-hot for categoricals."""

    schema: list[ColumnSchema]
    means: dict[str, float] = field(default_factory=dict)
    stds: dict[str, float] = field(default_factory=dict)
    categories: dict[str, list[str]] = field(default_factory=dict)
    positive_sensitive: str = ""
    positive_label: str = ""

    @property
    def feature_columns(self) -> list[ColumnSchema]:
        return [c for c in self.schema if c.role == FEATURE]

    @property
    def feature_names(self) -> list[str]:
        names = []
        for c in self.feature_columns:
            if c.kind == NUMERIC:
                names.append(c.name)
            else:
                names.extend(f"{c.name}={v}" for v in self.categories[c.name])
        return names

    def codes(self, name: str, values: np.ndarray) -> np.ndarray:
        """Category index per value, -1 for categories unseen at fit time."""
        lookup = {v: i for i, v in enumerate(self.categories[name])}
        return np.array([lookup.get(v, -1) for v in values], dtype=np.int64)

    def decode(self, name: str, codes: np.ndarray) -> np.ndarray:
        cats = self.categories[name]
        return np.array([cats[c] for c in codes], dtype=object)

    def transform(self, raw: TabularDataset) -> "EncodedDataset":
        blocks = []
        for c in self.feature_columns:
            col = raw.columns[c.name]
            if c.kind == NUMERIC:
                std = self.stds[c.name]
                if std == 0.0:
                    blocks.append(np.zeros((len(col), 1)))
                else:
                    blocks.append(((col - self.means[c.name]) / std)[:, None])
            else:
                codes = self.codes(c.name, col)
                onehot = np.zeros((len(col), len(self.categories[c.name])))
                seen = codes >= 0
                onehot[np.nonzero(seen)[0], codes[seen]] = 1.0
                blocks.append(onehot)
        n = raw.n_rows
        features = np.hstack(blocks) if blocks else np.zeros((n, 0))
        sens = raw.columns[raw.column(SENSITIVE).name]
        lab = raw.columns[raw.column(LABEL).name]
        return EncodedDataset(
            features=features,
            sensitive=(sens == self.positive_sensitive).astype(np.int8),
            labels=(lab == self.positive_label).astype(np.int8),
        )


@dataclass
class EncodedDataset:
    """Model-ready arrays.

    ``features`` excludes the sensitive attribute; ``inputs`` appends it as a
    0/1 column when ``include_sensitive`` is set, so flipping ``sensitive``
    changes what the model sees.
    """

    features: np.ndarray
    sensitive: np.ndarray
    labels: np.ndarray
    include_sensitive: bool = True

    def __post_init__(self):
        n = len(self.features)
        if len(self.sensitive) != n or len(self.labels) != n:
            raise ValueError("features, sensitive and labels must have equal length")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature values")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def inputs(self) -> np.ndarray:
        if self.include_sensitive:
            return np.hstack([self.features, self.sensitive[:, None].astype(np.float64)])
        return self.features

    @property
    def n_inputs(self) -> int:
        return self.features.shape[1] + int(self.include_sensitive)

    def take(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedDataset(self.features[idx], self.sensitive[idx], self.labels[idx],
                              self.include_sensitive)

    def with_sensitive(self, sensitive: np.ndarray) -> "EncodedDataset":
        return EncodedDataset(self.features, np.asarray(sensitive, dtype=np.int8), self.labels,
                              self.include_sensitive)

    @staticmethod
    def concat(parts: Sequence["EncodedDataset"]) -> "EncodedDataset":
        return EncodedDataset(
            np.vstack([p.features for p in parts]),
            np.concatenate([p.sensitive for p in parts]),
            np.concatenate([p.labels for p in parts]),
            parts[0].include_sensitive,
        )


def fit_encoder(raw: TabularDataset, fit_on: Iterable[int]) -> Encoder:
    idx = np.asarray(list(fit_on) if not isinstance(fit_on, np.ndarray) else fit_on, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("fit_on must be non-empty")
    enc = Encoder(list(raw.schema), positive_sensitive=raw.positive_sensitive,
                  positive_label=raw.positive_label)
    for c in enc.feature_columns:
        col = raw.columns[c.name][idx]
        if c.kind == NUMERIC:
            mean = float(np.mean(col))
            std = float(np.std(col))  # population std
            if std == 0.0:
                warnings.warn(f"column {c.name!r} has zero variance; encoded as 0", stacklevel=2)
            enc.means[c.name] = mean
            enc.stds[c.name] = std
        else:
            enc.categories[c.name] = sorted(set(col.tolist()))
    return enc


def encode(raw: TabularDataset, fit_on: Iterable[int], include_sensitive: bool = True
           ) -> tuple[EncodedDataset, Encoder]:
    enc = fit_encoder(raw, fit_on)
    data = enc.transform(raw)
    data.include_sensitive = include_sensitive
    return data, enc


# -- splitting --------------------------------------------------------------


def _cells(sensitive: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return 2 * np.asarray(sensitive, dtype=np.int64) + np.asarray(labels, dtype=np.int64)


def _stratified_take(cells: np.ndarray, fraction: float, rng: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Pick ``round(fraction * |cell|)`` rows from each (a, y) cell.

    Cells with fewer than two rows cannot be split on their own; they are
    pooled and split at random.
    """
    picked, rest, leftovers = [], [], []
    for cell in range(4):
        members = np.nonzero(cells == cell)[0]
        if members.size == 0:
            continue
        if members.size < 2:
            leftovers.append(members)
            continue
        members = rng.permutation(members)
        k = int(round(fraction * members.size))
        picked.append(members[:k])
        rest.append(members[k:])
    if leftovers:
        warnings.warn("(a, y) cell with fewer than 2 rows; split unstratified", stacklevel=3)
        members = rng.permutation(np.concatenate(leftovers))
        k = int(round(fraction * members.size))
        picked.append(members[:k])
        rest.append(members[k:])
    empty = np.zeros(0, dtype=np.int64)
    return (np.sort(np.concatenate(picked)) if picked else empty,
            np.sort(np.concatenate(rest)) if rest else empty)


def split_train_test(data, test_fraction: float = 0.2, seed: int = 0
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test split; returns (train indices, test indices).

    ``data`` is anything exposing ``sensitive`` and ``labels`` bit arrays.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test, train = _stratified_take(_cells(data.sensitive, data.labels), test_fraction, rng)
    return train, test


def extract_root(data, fraction: float = 0.01, seed: int = 0,
                 rows: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stratified server root sample; returns (root rows, remaining pool rows).

    ``rows`` restricts sampling to a subset of ``data`` (e.g. the train split);
    returned indices always refer to ``data``.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rows = np.arange(len(data.labels)) if rows is None else np.asarray(rows, dtype=np.int64)
    rng = np.random.default_rng(seed)
    cells = _cells(np.asarray(data.sensitive)[rows], np.asarray(data.labels)[rows])
    root, pool = _stratified_take(cells, fraction, rng)
    if root.size == 0:
        raise ValueError(f"root fraction {fraction} of {rows.size} rows selects no rows")
    return rows[root], rows[pool]


@dataclass(frozen=True)
class ClientPartition:
    client_id: int
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.size)


def dirichlet_partition(pool: Sequence[int], labels: Sequence[int], n_clients: int,
                        alpha: float, seed: int = 0) -> list[ClientPartition]:
    """Label-wise Dirichlet split of ``pool`` over ``n_clients``.

    ``labels`` is indexed by the values in ``pool``. For each class, the
    class rows are shuffled and cut at the cumulative Dirichlet(alpha)
    proportions. Empty clients get one row from the currently largest client.
    """
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    pool = np.asarray(pool, dtype=np.int64)
    labels = np.asarray(labels)
    if pool.size < n_clients:
        raise ValueError(f"pool of {pool.size} rows cannot cover {n_clients} clients")
    rng = np.random.default_rng(seed)
    buckets: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
    pool_labels = labels[pool]
    for cls in np.unique(pool_labels):
        members = rng.permutation(pool[pool_labels == cls])
        props = rng.dirichlet(np.full(n_clients, float(alpha)))
        cuts = (np.cumsum(props)[:-1] * members.size).astype(np.int64)
        for k, chunk in enumerate(np.split(members, cuts)):
            buckets[k].append(chunk)
    parts = [np.concatenate(b) if b else np.zeros(0, dtype=np.int64) for b in buckets]
    for k in range(n_clients):
        if parts[k].size == 0:
            donor = int(np.argmax([p.size for p in parts]))
            parts[k] = parts[donor][-1:]
            parts[donor] = parts[donor][:-1]
    return [ClientPartition(k + 1, np.sort(p)) for k, p in enumerate(parts)]
