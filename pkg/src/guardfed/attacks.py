"""Fairness and performance poisoning, and the two dual-facet coordination modes.

Attack kinds:

``flip_fair``   every attacker trains on data with ``a`` flipped.
``gauss_perf``  every attacker trains honestly, then adds N(0, sigma^2) noise.
``foe_perf``    every attacker emits ``lambda *`` the mean of the round's updates.
``s_dfa``       every attacker flips ``a`` and then applies the performance attack.
``sp_dfa``      attackers split into a flipping subgroup and a performance subgroup.

For the two DFA kinds, ``perf_mode`` picks Gaussian noise or FOE as the
performance attack.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import nn
from .dataset import EncodedDataset

NONE = "none"
FLIP_FAIR = "flip_fair"
GAUSS_PERF = "gauss_perf"
FOE_PERF = "foe_perf"
S_DFA = "s_dfa"
SP_DFA = "sp_dfa"
KINDS = (NONE, FLIP_FAIR, GAUSS_PERF, FOE_PERF, S_DFA, SP_DFA)

FAIRNESS = "fairness_attacker"
PERFORMANCE = "performance_attacker"
DUAL = "dual"


@dataclass(frozen=True)
class AdversarySpec:
    kind: str = NONE
    sigma: float = 0.5
    foe_lambda: float = 1.1
    split_ratio: float = 0.5
    perf_mode: str = "foe"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.foe_lambda == 0:
            raise ValueError("foe_lambda must be non-zero")
        if not 0.0 <= self.split_ratio <= 1.0:
            raise ValueError("split_ratio must lie in [0, 1]")
        if self.perf_mode not in ("gauss", "foe"):
            raise ValueError("perf_mode must be 'gauss' or 'foe'")

    def performance_mode(self) -> str:
        if self.kind == GAUSS_PERF:
            return "gauss"
        if self.kind == FOE_PERF:
            return "foe"
        return self.perf_mode


def flip_sensitive(data: EncodedDataset) -> EncodedDataset:
    """Copy of ``data`` with ``a`` replaced by ``1 - a``."""
    return data.with_sensitive(1 - data.sensitive)


def inject_noise(g: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    g = np.asarray(g, dtype=np.float64)
    if sigma == 0:
        return g.copy()
    rng = np.random.default_rng(seed)
    return g + rng.normal(0.0, sigma, size=g.shape)


def foe_update(updates: Sequence[np.ndarray], lam: float) -> np.ndarray:
    """``lam`` times the coordinate-wise mean of ``updates``."""
    if len(updates) == 0:
        raise ValueError("FOE needs at least one visible update")
    return lam * np.mean(np.stack(updates), axis=0)


def assign_roles(malicious_ids: Sequence[int], spec: AdversarySpec, seed: int = 0
                 ) -> dict[int, str]:
    """Role per malicious client.

    Under ``sp_dfa`` the ids are shuffled by ``seed`` and the first
    ``floor(ratio * k + 0.5)`` become fairness attackers.
    """
    ids = [int(i) for i in malicious_ids]
    if spec.kind == NONE:
        return {}
    if spec.kind == FLIP_FAIR:
        return {i: FAIRNESS for i in ids}
    if spec.kind in (GAUSS_PERF, FOE_PERF):
        return {i: PERFORMANCE for i in ids}
    if spec.kind == S_DFA:
        return {i: DUAL for i in ids}
    rng = np.random.default_rng(seed)
    order = [ids[j] for j in rng.permutation(len(ids))]
    n_fair = int(np.floor(spec.split_ratio * len(ids) + 0.5))
    return {i: (FAIRNESS if k < n_fair else PERFORMANCE) for k, i in enumerate(order)}


def trained_update(role: str, start: nn.MlpModel, data: EncodedDataset, cfg: nn.TrainConfig,
                   weigh: Callable[[EncodedDataset], np.ndarray | None] | None = None
                   ) -> np.ndarray:
    """The update a client produces before any performance perturbation.

    Fairness and dual attackers train on flipped data; ``weigh`` (when given)
    computes per-sample weights from the data the client actually sees.
    """
    if role in (FAIRNESS, DUAL):
        data = flip_sensitive(data)
    weights = weigh(data) if weigh is not None else None
    model = nn.train_local(start, data.inputs, data.labels, cfg, weights)
    return nn.compute_update(model, start)


def perturb(role: str, g: np.ndarray, spec: AdversarySpec, seed: int,
            foe_vector: np.ndarray | None = None) -> np.ndarray:
    """Apply the performance attack to an already trained update.

    Fairness attackers pass through unchanged.
    """
    if role == FAIRNESS:
        return g
    if spec.performance_mode() == "gauss":
        return inject_noise(g, spec.sigma, seed)
    if foe_vector is None:
        raise ValueError("FOE attacker needs the round's FOE vector")
    return foe_vector.copy()


def adversarial_updates(roles: Mapping[int, str], trained: Mapping[int, np.ndarray],
                        spec: AdversarySpec, noise_seeds: Mapping[int, int]
                        ) -> dict[int, np.ndarray]:
    """Final updates for the malicious clients of one round.

    ``trained`` holds every sampled client's update before perturbation,
    honest ones included: FOE colluders see all of them and emit the same
    scaled mean.
    """
    foe_vec = None
    if spec.performance_mode() == "foe" and any(r != FAIRNESS for r in roles.values()):
        foe_vec = foe_update([trained[c] for c in sorted(trained)], spec.foe_lambda)
    return {c: perturb(r, trained[c], spec, noise_seeds.get(c, 0), foe_vec)
            for c, r in roles.items()}


def adversarial_update(role: str, start: nn.MlpModel, data: EncodedDataset,
                       cfg: nn.TrainConfig, spec: AdversarySpec, seed: int,
                       benign_updates: Sequence[np.ndarray] = (),
                       weigh: Callable[[EncodedDataset], np.ndarray | None] | None = None
                       ) -> np.ndarray:
    """One malicious client's update, trained and perturbed in a single call."""
    g = trained_update(role, start, data, cfg, weigh)
    foe_vec = None
    if role != FAIRNESS and spec.performance_mode() == "foe":
        foe_vec = foe_update(list(benign_updates), spec.foe_lambda)
    return perturb(role, g, spec, seed, foe_vec)
