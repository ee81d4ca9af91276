"""Server aggregation rules: FedAvg, coordinate-wise median, an FLTrust-style
cosine baseline, and GuardFed's trust-gated mean."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics, nn
from .dataset import EncodedDataset

logger = logging.getLogger(__name__)


class EmptyCellError(ValueError):
    pass


class ReferenceFailure(RuntimeError):
    pass


def fedavg(updates: Sequence[np.ndarray], sizes: Sequence[int], base: nn.MlpModel,
           eta: float = 1.0) -> nn.MlpModel:
    """``base + eta * sum_n (|D_n| / sum_j |D_j|) g_n``."""
    if len(updates) == 0:
        raise ValueError("no updates to aggregate")
    if len(updates) != len(sizes):
        raise ValueError("one dataset size per update is required")
    sizes = np.asarray(sizes, dtype=np.float64)
    combined = (sizes / sizes.sum()) @ np.stack(updates)
    return nn.apply_update(base, combined, eta)


def mean_update(updates: Sequence[np.ndarray]) -> np.ndarray:
    return np.mean(np.stack(updates), axis=0)


def coordinate_median(updates: Sequence[np.ndarray]) -> np.ndarray:
    if len(updates) == 0:
        raise ValueError("no updates to aggregate")
    return np.median(np.stack(updates), axis=0)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def fltrust_baseline(updates: Sequence[np.ndarray], server_update: np.ndarray,
                     base: nn.MlpModel, eta: float = 1.0) -> nn.MlpModel:
    """Weights ``relu(cos(g_n, g_s))``; each ``g_n`` is rescaled to ``|g_s|``."""
    g_s = np.asarray(server_update, dtype=np.float64)
    norm_s = np.linalg.norm(g_s)
    if norm_s == 0:
        raise ReferenceFailure("server update is zero")
    weights, scaled = [], []
    for g in updates:
        weights.append(max(0.0, cosine(g, g_s)))
        norm = np.linalg.norm(g)
        scaled.append(g * (norm_s / norm) if norm > 0 else np.zeros_like(g))
    weights = np.asarray(weights)
    if weights.sum() == 0:
        return base
    combined = (weights / weights.sum()) @ np.stack(scaled)
    return nn.apply_update(base, combined, eta)


def compute_reweights(sensitive: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """``Pr(a) Pr(y) / Pr(a, y)`` per row, from empirical counts."""
    a = np.asarray(sensitive, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    n = a.size
    counts = np.zeros((2, 2))
    np.add.at(counts, (a, y), 1)
    if np.any(counts == 0):
        empty = [(i, j) for i in range(2) for j in range(2) if counts[i, j] == 0]
        raise EmptyCellError(
            f"(a, y) cells {empty} are empty; sample more synthetic rows")
    pa = counts.sum(axis=1) / n
    py = counts.sum(axis=0) / n
    table = np.outer(pa, py) / (counts / n)
    return table[a, y]


def reweigh(data: EncodedDataset) -> np.ndarray | None:
    """Reweighting weights for ``data``, or ``None`` when a cell is empty."""
    try:
        return compute_reweights(data.sensitive, data.labels)
    except EmptyCellError:
        return None


def deviation_index(g_n: np.ndarray, g_s: np.ndarray) -> float:
    """ReLU of the cosine between a client update and the reference update."""
    g_n = np.asarray(g_n, dtype=np.float64)
    g_s = np.asarray(g_s, dtype=np.float64)
    if g_n.shape != g_s.shape:
        raise ValueError("update lengths differ")
    ns = np.linalg.norm(g_s)
    if ns == 0:
        raise ReferenceFailure("reference update is zero")
    nn_ = np.linalg.norm(g_n)
    if nn_ == 0:
        return 0.0
    return max(0.0, min(1.0, float(np.dot(g_n, g_s) / (nn_ * ns))))


def trust_score(dev: float, fair: float, tau: float) -> float:
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return dev * math.exp(-tau * fair)


@dataclass
class TrustReport:
    round: int
    client_ids: list[int]
    fairness: list[float]
    deviation: list[float]
    trust: list[float]
    selected: list[bool]
    empty_selection: bool = False
    fairness_undefined: list[int] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [
            {"round": self.round, "client": c, "fair": f, "dev": d, "trust": t, "selected": s}
            for c, f, d, t, s in zip(self.client_ids, self.fairness, self.deviation,
                                     self.trust, self.selected)
        ]


@dataclass
class GuardFedState:
    synth: EncodedDataset
    weights: np.ndarray
    tau: float = 2.0
    gamma: float = 0.1
    eta: float = 1.0
    train_cfg: nn.TrainConfig = field(default_factory=nn.TrainConfig)

    @classmethod
    def build(cls, synth: EncodedDataset, **kwargs) -> "GuardFedState":
        return cls(synth, compute_reweights(synth.sensitive, synth.labels), **kwargs)


def train_reference(state: GuardFedState, base: nn.MlpModel, seed: int) -> nn.MlpModel:
    """Reweighted training on the synthetic set, starting from the current global model."""
    cfg = nn.TrainConfig(state.train_cfg.epochs, state.train_cfg.batch_size,
                         state.train_cfg.lr, seed)
    try:
        return nn.train_local(base, state.synth.inputs, state.synth.labels, cfg, state.weights)
    except nn.TrainingDivergence as exc:
        raise ReferenceFailure(f"reference training diverged: {exc}") from exc


def score_clients(state: GuardFedState, base: nn.MlpModel, updates: Sequence[np.ndarray],
                  reference_update: np.ndarray, client_ids: Sequence[int], round_idx: int
                  ) -> TrustReport:
    fair, dev, trust, undefined = [], [], [], []
    for cid, g in zip(client_ids, updates):
        model = nn.apply_update(base, g, 1.0)
        if np.all(np.isfinite(model.params)):
            try:
                f = metrics.fairness_index(model, state.synth)
            except metrics.UndefinedMetric:
                f = 1.0
                undefined.append(int(cid))
                logger.warning("round %d client %s: fairness index undefined", round_idx, cid)
        else:
            f = 1.0
            undefined.append(int(cid))
        d = deviation_index(g, reference_update) if np.all(np.isfinite(g)) else 0.0
        fair.append(f)
        dev.append(d)
        trust.append(trust_score(d, f, state.tau))
    selected = [t > state.gamma for t in trust]
    return TrustReport(round_idx, [int(c) for c in client_ids], fair, dev, trust, selected,
                       not any(selected), undefined)


def guardfed_aggregate(base: nn.MlpModel, updates: Sequence[np.ndarray], report: TrustReport,
                       eta: float) -> nn.MlpModel:
    chosen = [g for g, s in zip(updates, report.selected) if s]
    if not chosen:
        return base
    return nn.apply_update(base, mean_update(chosen), eta)


def guardfed_round(state: GuardFedState, base: nn.MlpModel, updates: Sequence[np.ndarray],
                   client_ids: Sequence[int] | None = None, round_idx: int = 0,
                   reference_seed: int = 0, reference_update: np.ndarray | None = None
                   ) -> tuple[nn.MlpModel, TrustReport]:
    """Score every update against a freshly trained reference, then average the trusted ones.

    When nobody clears the threshold the global model is kept and the report
    is flagged ``empty_selection``.
    """
    if len(updates) == 0:
        raise ValueError("no updates to aggregate")
    client_ids = list(range(len(updates))) if client_ids is None else list(client_ids)
    if reference_update is None:
        ref = train_reference(state, base, reference_seed)
        reference_update = nn.compute_update(ref, base)
    report = score_clients(state, base, updates, reference_update, client_ids, round_idx)
    if report.empty_selection:
        logger.info("round %d: no client above trust threshold %.3g", round_idx, state.gamma)
    return guardfed_aggregate(base, updates, report, state.eta), report
