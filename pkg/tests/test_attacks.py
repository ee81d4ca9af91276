from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guardfed import attacks, nn
from guardfed.aggregation import reweigh
from guardfed.dataset import EncodedDataset


@pytest.fixture()
def client():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(60, 4))
    a = rng.integers(0, 2, 60)
    y = ((x[:, 0] + 0.5 * a) > 0).astype(int)
    return EncodedDataset(x, a.astype(np.int8), y.astype(np.int8))


CFG = nn.TrainConfig(epochs=2, batch_size=16, lr=0.1, seed=5)


def test_flip_is_an_exact_involution(client):
    once = attacks.flip_sensitive(client)
    assert np.array_equal(once.sensitive, 1 - client.sensitive)
    assert np.array_equal(attacks.flip_sensitive(once).sensitive, client.sensitive)
    assert np.array_equal(once.features, client.features)
    assert np.array_equal(once.labels, client.labels)


def test_sigma_zero_is_identity():
    g = np.random.default_rng(1).normal(size=30)
    assert np.array_equal(attacks.inject_noise(g, 0.0, seed=9), g)


def test_noise_is_seeded_gaussian():
    g = np.zeros(200000)
    noisy = attacks.inject_noise(g, 0.5, seed=3)
    assert np.array_equal(noisy, attacks.inject_noise(g, 0.5, seed=3))
    assert abs(noisy.std() - 0.5) < 0.005
    with pytest.raises(ValueError):
        attacks.inject_noise(g, -1.0, 0)


@pytest.mark.parametrize("weigh", [None, reweigh])
def test_dual_update_decomposes_into_flip_then_noise(client, weigh):
    """The dual attacker's update equals the flipped-data update plus the same noise draw."""
    model = nn.init([5, 6, 2], 0)
    spec = attacks.AdversarySpec(attacks.S_DFA, sigma=0.3, perf_mode="gauss")
    dual = attacks.adversarial_update(attacks.DUAL, model, client, CFG, spec, seed=42, weigh=weigh)
    flipped = attacks.trained_update(attacks.FAIRNESS, model, client, CFG, weigh)
    assert np.array_equal(dual, attacks.inject_noise(flipped, 0.3, seed=42))
    noise = attacks.inject_noise(np.zeros_like(flipped), 0.3, seed=42)
    assert np.array_equal(dual, flipped + noise)
    # and the flipped-data update is training on flip(D), exactly
    direct = nn.compute_update(nn.train_local(model, attacks.flip_sensitive(client).inputs,
                                              client.labels, CFG,
                                              None if weigh is None else weigh(attacks.flip_sensitive(client))),
                               model)
    assert np.array_equal(flipped, direct)


def test_flip_changes_the_update_when_a_is_an_input(client):
    model = nn.init([5, 2], 0)
    honest = attacks.trained_update("honest", model, client, CFG)
    flipped = attacks.trained_update(attacks.FAIRNESS, model, client, CFG)
    assert not np.array_equal(honest, flipped)


def test_foe_is_scaled_mean():
    ups = [np.array([1.0, 2.0]), np.array([3.0, -2.0])]
    assert np.array_equal(attacks.foe_update(ups, -10), np.array([-20.0, 0.0]))
    with pytest.raises(ValueError):
        attacks.foe_update([], 1.1)


def test_round_level_foe_uses_all_pre_perturbation_updates():
    trained = {1: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0]), 3: np.array([2.0, 2.0])}
    roles = {2: attacks.PERFORMANCE, 3: attacks.FAIRNESS}
    spec = attacks.AdversarySpec(attacks.SP_DFA, foe_lambda=2.0, perf_mode="foe")
    out = attacks.adversarial_updates(roles, trained, spec, {})
    assert np.array_equal(out[2], 2.0 * np.array([1.0, 1.0]))
    assert np.array_equal(out[3], trained[3])
    assert set(out) == {2, 3}


def test_spec_validation():
    with pytest.raises(ValueError):
        attacks.AdversarySpec("bogus")
    with pytest.raises(ValueError):
        attacks.AdversarySpec(attacks.FOE_PERF, foe_lambda=0)
    with pytest.raises(ValueError):
        attacks.AdversarySpec(attacks.SP_DFA, split_ratio=1.5)
    assert attacks.AdversarySpec(attacks.GAUSS_PERF, perf_mode="foe").performance_mode() == "gauss"


def test_roles_per_kind():
    ids = [4, 9, 11]
    assert attacks.assign_roles(ids, attacks.AdversarySpec(attacks.NONE)) == {}
    assert set(attacks.assign_roles(ids, attacks.AdversarySpec(attacks.S_DFA)).values()) == {attacks.DUAL}
    assert set(attacks.assign_roles(ids, attacks.AdversarySpec(attacks.FLIP_FAIR)).values()) == {attacks.FAIRNESS}
    assert set(attacks.assign_roles(ids, attacks.AdversarySpec(attacks.FOE_PERF)).values()) == {attacks.PERFORMANCE}


@settings(max_examples=200, deadline=None)
@given(k=st.integers(0, 60), ratio=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_sp_dfa_roles_disjoint_and_exhaustive(k, ratio, seed):
    ids = list(range(100, 100 + k))
    roles = attacks.assign_roles(ids, attacks.AdversarySpec(attacks.SP_DFA, split_ratio=ratio), seed)
    fair = {i for i, r in roles.items() if r == attacks.FAIRNESS}
    perf = {i for i, r in roles.items() if r == attacks.PERFORMANCE}
    assert not fair & perf
    assert fair | perf == set(ids)
    assert len(fair) == int(np.floor(ratio * k + 0.5))
