"""Experiment setup, the round loop, and the results stream."""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import aggregation, attacks, copula, metrics, nn
from .config import ExperimentConfig
from .dataset import (ClientPartition, EncodedDataset, Encoder, TabularDataset,
                      dirichlet_partition, extract_root, fit_encoder, load_from_manifest,
                      load_manifest, split_train_test)
from .seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RESULTS_ENV = "GUARDFED_RESULTS_DIR"


class ExperimentError(RuntimeError):
    pass


@dataclass
class Setup:
    """Everything fixed before round 1."""

    cfg: ExperimentConfig
    raw: TabularDataset
    encoder: Encoder
    data: EncodedDataset
    train_rows: np.ndarray
    test: EncodedDataset
    root_rows: np.ndarray
    partitions: list[ClientPartition]
    malicious: list[int]
    roles: dict[int, str]
    server: EncodedDataset
    server_synthetic: copula.SyntheticDataset
    threshold: float
    model: nn.MlpModel

    def client_data(self, client_id: int) -> EncodedDataset:
        return self.data.take(self.partitions[client_id - 1].indices)


def build_server_data(cfg: ExperimentConfig, raw: TabularDataset, root_rows: np.ndarray,
                      n_train: int) -> copula.SyntheticDataset:
    return copula.build_root_plus_synth(raw.take(root_rows), cfg.synth_fraction, n_train,
                                        derive_seed(cfg.seed, "copula"))


def server_data(cfg: ExperimentConfig) -> copula.SyntheticDataset:
    """The server's root-plus-synthetic table, exactly as ``prepare`` builds it."""
    raw = load_from_manifest(load_manifest(cfg.dataset))
    train_rows, _ = split_train_test(raw, cfg.test_fraction, derive_seed(cfg.seed, "split"))
    root_rows, _ = extract_root(raw, cfg.root_fraction, derive_seed(cfg.seed, "root"),
                                rows=train_rows)
    return build_server_data(cfg, raw, root_rows, len(train_rows))


def prepare(cfg: ExperimentConfig) -> Setup:
    if not cfg.dataset:
        raise ExperimentError("config has no dataset manifest")
    manifest = load_manifest(cfg.dataset)
    raw = load_from_manifest(manifest)
    master = cfg.seed

    train_rows, test_rows = split_train_test(raw, cfg.test_fraction, derive_seed(master, "split"))
    root_rows, pool_rows = extract_root(raw, cfg.root_fraction, derive_seed(master, "root"),
                                        rows=train_rows)
    encoder = fit_encoder(raw, train_rows)
    data = encoder.transform(raw)
    data.include_sensitive = cfg.sensitive_as_feature
    test = data.take(test_rows)

    partitions = dirichlet_partition(pool_rows, data.labels, cfg.n_clients, cfg.alpha,
                                     derive_seed(master, "partition"))
    n_mal = int(np.floor(cfg.attacker_fraction * cfg.n_clients + 1e-9))
    if cfg.attack == attacks.NONE:
        n_mal = 0
    ids = np.arange(1, cfg.n_clients + 1)
    malicious = sorted(int(i) for i in rng_for(master, "malicious").choice(ids, n_mal, replace=False))
    roles = attacks.assign_roles(malicious, cfg.adversary, derive_seed(master, "roles"))

    synthetic = build_server_data(cfg, raw, root_rows, len(train_rows))
    server = encoder.transform(synthetic.table)
    server.include_sensitive = cfg.sensitive_as_feature

    dims = [data.n_inputs, *cfg.hidden_dims, 2]
    model = nn.init(dims, derive_seed(master, "init"))
    return Setup(cfg, raw, encoder, data, train_rows, test, root_rows, partitions, malicious,
                 roles, server, synthetic, manifest.accuracy_threshold, model)


@dataclass
class RoundRecord:
    round: int
    report: metrics.EvalReport
    sampled: list[int]
    roles: dict[int, str]
    trust: aggregation.TrustReport | None = None
    duration_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "type": "round",
            "round": self.round,
            "eval": self.report.to_dict(),
            "sampled": self.sampled,
            "attackers": {str(k): v for k, v in sorted(self.roles.items())},
        }
        if self.trust is not None:
            d["empty_selection"] = self.trust.empty_selection
            d["selected"] = [c for c, s in zip(self.trust.client_ids, self.trust.selected) if s]
        d.update(self.extra)
        return d


def _sample_clients(setup: Setup, t: int) -> list[int]:
    cfg = setup.cfg
    rng = rng_for(cfg.seed, "sample", t)
    if cfg.exact_attackers_per_round and setup.malicious:
        k_mal = min(len(setup.malicious), int(round(cfg.attacker_fraction * cfg.clients_per_round)))
        honest = [c for c in range(1, cfg.n_clients + 1) if c not in setup.roles]
        chosen = list(rng.choice(setup.malicious, k_mal, replace=False))
        chosen += list(rng.choice(honest, cfg.clients_per_round - k_mal, replace=False))
    else:
        chosen = list(rng.choice(np.arange(1, cfg.n_clients + 1), cfg.clients_per_round,
                                 replace=False))
    return sorted(int(c) for c in chosen)


def _server_weights(setup: Setup) -> np.ndarray | None:
    if setup.cfg.client_reweighting:
        return aggregation.compute_reweights(setup.server.sensitive, setup.server.labels)
    return None


def run_round(setup: Setup, model: nn.MlpModel, t: int, state: aggregation.GuardFedState | None
              ) -> tuple[nn.MlpModel, RoundRecord]:
    cfg = setup.cfg
    start = time.perf_counter()
    sampled = _sample_clients(setup, t)
    weigh = aggregation.reweigh if cfg.client_reweighting else None

    trained: dict[int, np.ndarray] = {}
    for c in sampled:
        role = setup.roles.get(c, "honest")
        tcfg = nn.TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, derive_seed(cfg.seed, "train", t, c))
        try:
            trained[c] = attacks.trained_update(role, model, setup.client_data(c), tcfg, weigh)
        except nn.TrainingDivergence as exc:
            raise ExperimentError(f"round {t}, client {c}: {exc}") from exc

    in_round = {c: setup.roles[c] for c in sampled if c in setup.roles}
    noise_seeds = {c: derive_seed(cfg.seed, "noise", t, c) for c in in_round}
    final = dict(trained)
    final.update(attacks.adversarial_updates(in_round, trained, cfg.adversary, noise_seeds))
    updates = [final[c] for c in sampled]

    trust = None
    if cfg.aggregator == "fedavg":
        sizes = [len(setup.partitions[c - 1]) for c in sampled]
        new = aggregation.fedavg(updates, sizes, model, cfg.eta_global)
    elif cfg.aggregator == "median":
        new = nn.apply_update(model, aggregation.coordinate_median(updates), cfg.eta_global)
    elif cfg.aggregator == "fltrust":
        ref = _reference(setup, model, t)
        new = aggregation.fltrust_baseline(updates, nn.compute_update(ref, model), model,
                                           cfg.eta_global)
    elif cfg.aggregator == "guardfed":
        try:
            new, trust = aggregation.guardfed_round(
                state, model, updates, sampled, t,
                reference_seed=derive_seed(cfg.seed, "reference", t))
        except aggregation.ReferenceFailure as exc:
            raise ExperimentError(f"round {t}, server reference: {exc}") from exc
    else:
        raise ExperimentError(f"unknown aggregator {cfg.aggregator!r}")

    if not np.all(np.isfinite(new.params)):
        raise ExperimentError(f"round {t}: global model became non-finite")
    report = metrics.evaluate(new, setup.test, setup.threshold)
    rec = RoundRecord(t, report, sampled, in_round, trust, time.perf_counter() - start)
    return new, rec


def _reference(setup: Setup, model: nn.MlpModel, t: int) -> nn.MlpModel:
    cfg = setup.cfg
    tcfg = nn.TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, derive_seed(cfg.seed, "reference", t))
    return nn.train_local(model, setup.server.inputs, setup.server.labels, tcfg,
                          _server_weights(setup))


def guardfed_state(setup: Setup) -> aggregation.GuardFedState:
    cfg = setup.cfg
    weights = aggregation.compute_reweights(setup.server.sensitive, setup.server.labels)
    return aggregation.GuardFedState(
        setup.server, weights, cfg.tau, cfg.gamma, cfg.eta_global,
        nn.TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, 0))


def iter_rounds(cfg: ExperimentConfig, setup: Setup | None = None):
    setup = setup if setup is not None else prepare(cfg)
    state = guardfed_state(setup) if cfg.aggregator == "guardfed" else None
    model = setup.model
    for t in range(1, cfg.rounds + 1):
        model, rec = run_round(setup, model, t, state)
        yield model, rec


def run_experiment(cfg: ExperimentConfig, setup: Setup | None = None) -> list[RoundRecord]:
    return [rec for _, rec in iter_rounds(cfg, setup)]


def final_model(cfg: ExperimentConfig, setup: Setup | None = None) -> nn.MlpModel:
    model = None
    for model, _ in iter_rounds(cfg, setup):
        pass
    return model


# -- results stream ---------------------------------------------------------


def tags_for(cfg: ExperimentConfig) -> dict:
    return {
        "method": cfg.aggregator,
        "attack": cfg.attack,
        "distribution": "iid" if cfg.alpha >= 1000 else f"noniid(alpha={cfg.alpha:g})",
        "dataset": Path(cfg.dataset).stem if cfg.dataset else "",
        "seed": cfg.seed,
    }


def stream_lines(cfg: ExperimentConfig, records: Sequence[RoundRecord],
                 extra_tags: dict | None = None) -> list[str]:
    tags = tags_for(cfg)
    tags.update(extra_tags or {})
    cfg_dict = cfg.to_dict()
    cfg_dict["dataset"] = Path(cfg.dataset).name if cfg.dataset else ""
    out = [json.dumps({"type": "header", "schema_version": SCHEMA_VERSION,
                       "config": cfg_dict, "tags": tags}, sort_keys=True)]
    for rec in records:
        out.append(json.dumps(rec.to_dict(), sort_keys=True))
        if rec.trust is not None:
            out.extend(json.dumps({"type": "trust", **row}, sort_keys=True)
                       for row in rec.trust.rows())
    out.append(json.dumps(summary_of(records, tags), sort_keys=True))
    return out


def summary_of(records: Sequence[RoundRecord], tags: dict) -> dict:
    last = records[-1]
    return {"type": "summary", "schema_version": SCHEMA_VERSION, "tags": tags,
            "rounds": len(records), "final": last.report.to_dict(),
            "empty_selection_rounds": sum(1 for r in records
                                          if r.trust is not None and r.trust.empty_selection)}


def results_dir(default: str | Path = "results") -> Path:
    return Path(os.environ.get(RESULTS_ENV, default))


def write_results(cfg: ExperimentConfig, records: Sequence[RoundRecord], out_dir: str | Path,
                  stem: str | None = None, extra_tags: dict | None = None) -> Path:
    """Write ``<stem>.ndjson`` plus ``<stem>.summary.json`` and ``<stem>.timings.jsonl``.

    Wall-clock timings live in their own file so the results stream stays
    byte-identical across reruns.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or default_stem(cfg)
    lines = stream_lines(cfg, records, extra_tags)
    path = out_dir / f"{stem}.ndjson"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / f"{stem}.summary.json").write_text(lines[-1] + "\n", encoding="utf-8")
    (out_dir / f"{stem}.timings.jsonl").write_text(
        "\n".join(json.dumps({"round": r.round, "duration_s": r.duration_s}) for r in records)
        + "\n", encoding="utf-8")
    return path


def default_stem(cfg: ExperimentConfig) -> str:
    base = cfg.name or f"{Path(cfg.dataset).stem}_{cfg.aggregator}_{cfg.attack}"
    return f"{base}_a{cfg.alpha:g}_s{cfg.seed}"


# -- sweeps -----------------------------------------------------------------


@dataclass
class SweepRun:
    param: str
    value: object
    cfg: ExperimentConfig
    records: list[RoundRecord]


def sweep_configs(base: ExperimentConfig, param: str, values: Iterable, repeats: int = 1
                  ) -> list[tuple[object, int, ExperimentConfig]]:
    """``(value, repeat, cfg)`` for every point of the sweep, validated up front.

    Repeat ``r`` uses master seed ``derive(base.seed, "repeat", r)`` (repeat 0
    keeps ``base.seed``), shared across values so swept runs are paired.
    """
    from .config import FIELDS

    if param not in FIELDS and param != "server_fraction":
        raise ValueError(f"unknown sweep parameter {param!r}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    out = []
    for value in values:
        for r in range(repeats):
            seed = base.seed if r == 0 else derive_seed(base.seed, "repeat", r) % (2**31)
            out.append((value, r, base.replace(**{param: value, "seed": seed})))
    return out


def sweep(base: ExperimentConfig, param: str, values: Iterable, repeats: int = 1
          ) -> list[SweepRun]:
    """Run ``base`` once per (value, repeat); see ``sweep_configs`` for seeding."""
    return [SweepRun(param, value, cfg, run_experiment(cfg))
            for value, _, cfg in sweep_configs(base, param, values, repeats)]
