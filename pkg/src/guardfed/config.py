"""Experiment configuration files.

One ``key = value`` per line; ``#`` starts a comment. Values are ints,
floats, ``true``/``false`` or bare strings. Relative ``dataset`` paths are
resolved against the config file's directory. See ``configs/`` for examples.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .attacks import KINDS, AdversarySpec

AGGREGATORS = ("fedavg", "median", "fltrust", "guardfed")
ATTACKER_WARNING = 0.5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""
    name: str = ""
    n_clients: int = 100
    clients_per_round: int = 20
    rounds: int = 100
    alpha: float = 5000.0
    attacker_fraction: float = 0.2
    exact_attackers_per_round: bool = False
    attack: str = "none"
    sigma: float = 0.5
    foe_lambda: float = 1.1
    split_ratio: float = 0.5
    perf_mode: str = "foe"
    aggregator: str = "fedavg"
    tau: float = 2.0
    gamma: float = 0.1
    eta_global: float = 1.0
    epochs: int = 1
    batch_size: int = 64
    lr: float = 0.005
    hidden: str = "64"
    root_fraction: float = 0.01
    synth_fraction: float = 0.04
    test_fraction: float = 0.2
    client_reweighting: bool = True
    sensitive_as_feature: bool = True
    seed: int = 0

    @property
    def adversary(self) -> AdversarySpec:
        return AdversarySpec(self.attack, self.sigma, self.foe_lambda, self.split_ratio,
                             self.perf_mode)

    @property
    def hidden_dims(self) -> list[int]:
        text = str(self.hidden).strip()
        if not text or text == "none":
            return []
        return [int(v) for v in text.split(",")]

    @property
    def server_fraction(self) -> float:
        return self.root_fraction + self.synth_fraction

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        for key in changes:
            if key not in FIELDS and key != "server_fraction":
                raise ConfigError(f"unknown parameter {key!r}")
        if "server_fraction" in changes:
            total = float(changes.pop("server_fraction"))
            root = changes.get("root_fraction", self.root_fraction)
            if total < root:
                raise ConfigError("server_fraction below root_fraction")
            changes["synth_fraction"] = round(total - root, 12)
        cfg = dataclasses.replace(self, **{k: _coerce(k, v) for k, v in changes.items()})
        problems = _range_problems(cfg)
        if problems:
            raise ConfigError("; ".join(msg for _, msg in problems))
        return cfg


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, value: Any) -> Any:
    typ = FIELDS[key].type
    if typ == "bool":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("true", "yes", "1"):
            return True
        if text in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true/false, got {value!r}")
    if typ == "int":
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if typ == "float":
        return float(value)
    return str(value)


def _range_problems(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    out = []

    def need(key, ok, msg):
        if not ok:
            out.append((key, msg))

    need("n_clients", cfg.n_clients >= 1, "n_clients must be >= 1")
    need("clients_per_round", 1 <= cfg.clients_per_round <= cfg.n_clients,
         "clients_per_round must lie in [1, n_clients]")
    need("rounds", cfg.rounds >= 1, "rounds must be >= 1")
    need("alpha", cfg.alpha > 0, "alpha must be positive")
    need("attacker_fraction", 0 <= cfg.attacker_fraction < 1, "attacker_fraction must lie in [0, 1)")
    need("attack", cfg.attack in KINDS, f"attack must be one of {', '.join(KINDS)}")
    need("aggregator", cfg.aggregator in AGGREGATORS,
         f"aggregator must be one of {', '.join(AGGREGATORS)}")
    need("sigma", cfg.sigma >= 0, "sigma must be >= 0")
    need("foe_lambda", cfg.foe_lambda != 0, "foe_lambda must be non-zero")
    need("split_ratio", 0 <= cfg.split_ratio <= 1, "split_ratio must lie in [0, 1]")
    need("perf_mode", cfg.perf_mode in ("gauss", "foe"), "perf_mode must be gauss or foe")
    need("tau", cfg.tau >= 0, "tau must be >= 0")
    need("eta_global", cfg.eta_global > 0, "eta_global must be positive")
    need("epochs", cfg.epochs >= 1, "epochs must be >= 1")
    need("batch_size", cfg.batch_size >= 1, "batch_size must be >= 1")
    need("lr", cfg.lr > 0, "lr must be positive")
    need("root_fraction", 0 < cfg.root_fraction < 1, "root_fraction must lie in (0, 1)")
    need("synth_fraction", 0 <= cfg.synth_fraction < 1, "synth_fraction must lie in [0, 1)")
    need("test_fraction", 0 < cfg.test_fraction < 1, "test_fraction must lie in (0, 1)")
    try:
        dims = cfg.hidden_dims
        need("hidden", all(d >= 1 for d in dims), "hidden sizes must be positive")
    except ValueError:
        out.append(("hidden", "hidden must be a comma-separated list of integers"))
    return out


def _parse_scalar(text: str) -> Any:
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def validate_config(raw: str, base_dir: str | Path | None = None, source: str = "<config>"
                    ) -> ExperimentConfig:
    """Parse config text; every error message names the offending line."""
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    errors: list[str] = []
    for lineno, rawline in enumerate(raw.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected 'key = value'")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in FIELDS:
            errors.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        if key in values:
            errors.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = _coerce(key, _parse_scalar(value))
        except ValueError as exc:
            errors.append(f"{source}:{lineno}: {key}: {exc}")
            continue
        lines[key] = lineno
    if errors:
        raise ConfigError("\n".join(errors))

    if "dataset" in values and base_dir is not None:
        path = Path(values["dataset"])
        if not path.is_absolute():
            values["dataset"] = str((Path(base_dir) / path).resolve())
    cfg = ExperimentConfig(**values)
    problems = _range_problems(cfg)
    if problems:
        raise ConfigError("\n".join(
            f"{source}:{lines[k]}: {msg}" if k in lines else f"{source}: {msg} (default value)"
            for k, msg in problems))
    if cfg.attacker_fraction > ATTACKER_WARNING:
        where = f"{source}:{lines.get('attacker_fraction', 0)}"
        warnings.warn(f"{where}: attacker_fraction {cfg.attacker_fraction} exceeds "
                      f"{ATTACKER_WARNING}", stacklevel=2)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return validate_config(path.read_text(encoding="utf-8"), path.parent, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
