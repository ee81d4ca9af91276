"""Accuracy and group-fairness gaps for binary classifiers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import nn


class UndefinedMetric(ValueError):
    """A fairness gap needs rows in a group cell that is empty."""


@dataclass(frozen=True)
class GroupConfusion:
    """Counts per sensitive group ``a`` (index 0 and 1)."""

    predicted_positive: tuple[int, int]
    positives: tuple[int, int]
    true_positives: tuple[int, int]
    total: tuple[int, int]

    @classmethod
    def from_arrays(cls, pred, sensitive, labels) -> "GroupConfusion":
        pred = np.asarray(pred).astype(bool)
        a = np.asarray(sensitive).astype(bool)
        y = np.asarray(labels).astype(bool)
        groups = (~a, a)
        return cls(
            tuple(int(np.sum(pred & g)) for g in groups),
            tuple(int(np.sum(y & g)) for g in groups),
            tuple(int(np.sum(pred & y & g)) for g in groups),
            tuple(int(np.sum(g)) for g in groups),
        )

    def positive_rates(self) -> tuple[float, float]:
        if min(self.total) == 0:
            raise UndefinedMetric("a sensitive group has no rows")
        return tuple(p / t for p, t in zip(self.predicted_positive, self.total))

    def true_positive_rates(self) -> tuple[float, float]:
        if min(self.positives) == 0:
            raise UndefinedMetric("a sensitive group has no y=1 rows")
        return tuple(tp / p for tp, p in zip(self.true_positives, self.positives))

    def aspd(self) -> float:
        r0, r1 = self.positive_rates()
        return abs(r0 - r1)

    def aeod(self) -> float:
        t0, t1 = self.true_positive_rates()
        return abs(t0 - t1)


def _predictions(model, data) -> np.ndarray:
    return nn.predict(model, data.inputs)


def accuracy_from(pred, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty data")
    return float(np.mean(np.asarray(pred) == labels))


def accuracy(model: nn.MlpModel, data) -> float:
    return accuracy_from(_predictions(model, data), data.labels)


def aspd_from(pred, sensitive, labels) -> float:
    return GroupConfusion.from_arrays(pred, sensitive, labels).aspd()


def aeod_from(pred, sensitive, labels) -> float:
    return GroupConfusion.from_arrays(pred, sensitive, labels).aeod()


def aspd(model: nn.MlpModel, data) -> float:
    return aspd_from(_predictions(model, data), data.sensitive, data.labels)


def aeod(model: nn.MlpModel, data) -> float:
    return aeod_from(_predictions(model, data), data.sensitive, data.labels)


def fairness_index(model: nn.MlpModel, synth) -> float:
    """Equal-opportunity gap of ``model`` measured on the server's synthetic data."""
    return aeod(model, synth)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    aspd: float | None
    aeod: float | None
    fairness_valid: bool
    threshold: float
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        return d


def evaluate_predictions(pred, sensitive, labels, threshold: float) -> EvalReport:
    acc = accuracy_from(pred, labels)
    conf = GroupConfusion.from_arrays(pred, sensitive, labels)
    undefined = []
    try:
        sp = conf.aspd()
    except UndefinedMetric:
        sp, undefined = None, undefined + ["aspd"]
    try:
        eo = conf.aeod()
    except UndefinedMetric:
        eo, undefined = None, undefined + ["aeod"]
    return EvalReport(acc, sp, eo, acc >= threshold and not math.isnan(acc), threshold,
                      tuple(undefined))


def evaluate(model: nn.MlpModel, data, threshold: float) -> EvalReport:
    """Accuracy plus both gaps; fairness counts only when accuracy reaches ``threshold``."""
    return evaluate_predictions(_predictions(model, data), data.sensitive, data.labels, threshold)
