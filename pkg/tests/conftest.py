from __future__ import annotations

from pathlib import Path

import pytest

from guardfed.config import ExperimentConfig
from guardfed.dataset import load_from_manifest, load_manifest

FIXTURES = Path(__file__).parent / "fixtures"
TOY_MANIFEST = FIXTURES / "toy.manifest"


@pytest.fixture(scope="session")
def toy_manifest():
    return load_manifest(TOY_MANIFEST)


@pytest.fixture(scope="session")
def toy_raw(toy_manifest):
    return load_from_manifest(toy_manifest)


def toy_config(**changes) -> ExperimentConfig:
    """A few-second experiment on the toy fixture."""
    base = dict(dataset=str(TOY_MANIFEST), n_clients=10, clients_per_round=5, rounds=4,
                epochs=2, batch_size=16, lr=0.05, hidden="8", root_fraction=0.1,
                synth_fraction=0.2, seed=3)
    base.update(changes)
    return ExperimentConfig(**base)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
