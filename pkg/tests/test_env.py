from dataclasses import astuple

import numpy as np
import pytest

from lmdp_psi.env import (LmdpPsi, ModelClass, enumerate_trajectories, random_instance, sample_episode,
                          trajectory_probability, validate_model, value_of_policy)
from lmdp_psi.errors import ConfigError, SizeError
from lmdp_psi.policies import InformedPolicy, StochasticPolicy, TablePolicy, UniformPolicy

from conftest import all_prefixes, random_blind_policies, vectorized_rollouts


def test_well_formed_instance_validates(small_instance):
    rep = validate_model(small_instance)
    assert rep.ok and rep.issues() == []


def test_bad_transition_row_reported(small_instance):
    T = np.array(small_instance.transitions)
    T[0, 0, 0] *= 0.9
    rep = validate_model(small_instance.replace(transitions=T))
    assert len(rep.simplex_violations) == 1 and not rep.rank_deficient


def test_identical_emission_columns_flagged(small_instance):
    E = np.array(small_instance.emission)
    E[:, 1] = E[:, 0]
    rep = validate_model(small_instance.replace(emission=E))
    assert rep.rank_deficient and rep.emission_rank == 1


def test_reward_range_reported(small_instance):
    rep = validate_model(small_instance.replace(reward=np.array([0.0, 1.5])))
    assert len(rep.reward_violations) == 1


def test_shape_mismatch_raises(small_instance):
    with pytest.raises(ConfigError):
        small_instance.replace(emission=np.ones((3, 3)) / 3)


def test_sampling_is_deterministic(small_instance):
    pol = UniformPolicy(small_instance.A)
    a = [sample_episode(small_instance, pol, np.random.default_rng(5)) for _ in range(2)]
    assert astuple(a[0]) == astuple(a[1])


def test_single_context_episode_law(rng):
    theta = random_instance(rng, M=1, S=2, A=2, O=2, I=3, H=2)
    pol = TablePolicy({}, theta.A)
    # P(tau) equals the MDP trajectory probability times P(iota | 1)
    for st, ac, ob in enumerate_trajectories(theta):
        if any(ac):
            continue
        mdp = theta.init_dist[0, st[0]] * theta.obs_kernel[0, st[0], 0, ob[0]] \
            * theta.transitions[0, st[0], 0, st[1]] * theta.obs_kernel[0, st[1], 0, ob[1]]
        for iota in range(theta.I):
            assert trajectory_probability(theta, pol, iota, st, ac, ob) == pytest.approx(
                mdp * theta.emission[iota, 0], abs=1e-15)


def test_side_info_frequency_matches_marginal():
    theta = random_instance(np.random.default_rng(3), M=3, S=2, A=2, O=2, I=4, H=1)
    rng = np.random.default_rng(11)
    pol = UniformPolicy(theta.A)
    n = 100_000
    counts = np.zeros(theta.I)
    for _ in range(n):
        counts[sample_episode(theta, pol, rng).iota] += 1
    p = theta.emission @ theta.mixing
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) <= 3 * se)


def test_normalization_under_several_policies(rng):
    theta = random_instance(rng, M=2, S=2, A=2, O=2, I=3, H=2)
    for pol in random_blind_policies(theta, rng, 4):
        total = sum(trajectory_probability(theta, pol, iota, *tau)
                    for tau in enumerate_trajectories(theta) for iota in range(theta.I))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_trajectory_probability_matches_simulation():
    theta = random_instance(np.random.default_rng(21), M=2, S=2, A=2, O=2, I=2, H=2)
    pol = UniformPolicy(theta.A)
    target = ((0, 1), (1, 0), (1, 1))
    p = trajectory_probability(theta, pol, 0, *target)
    # reference simulator path
    rng = np.random.default_rng(0)
    n = 100_000
    hits = 0
    for _ in range(n):
        tr = sample_episode(theta, pol, rng)
        hits += (tr.iota == 0 and (tr.states, tr.actions, tr.observations) == target)
    assert abs(hits / n - p) <= 3 * np.sqrt(p * (1 - p) / n)
    # independent vectorized sampler at 10^6 episodes
    n = 1_000_000
    probs = np.full((theta.H, theta.S, theta.A), 1.0 / theta.A)
    iota, st, ac, ob, _ = vectorized_rollouts(theta, probs, n, np.random.default_rng(1))
    hit = (iota == 0) & np.all(st == target[0], 1) & np.all(ac == target[1], 1) & np.all(ob == target[2], 1)
    assert abs(hit.mean() - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_value_matches_monte_carlo():
    theta = random_instance(np.random.default_rng(8), M=3, S=3, A=2, O=3, I=3, H=3)
    rng = np.random.default_rng(1)
    action_table = rng.integers(0, theta.A, size=(theta.H, theta.S))
    # the same stationary rule as a history table
    table = {p: int(action_table[(len(p) - 1) // 3, p[-1]]) for p in all_prefixes(theta)}
    v = value_of_policy(theta, TablePolicy(table, theta.A))
    *_, ret = vectorized_rollouts(theta, action_table, 1_000_000, rng)
    assert abs(ret.mean() - v) <= 3 * ret.std() / np.sqrt(len(ret))


def test_zero_reward_value_is_zero(small_instance):
    theta = small_instance.replace(reward=np.zeros(small_instance.O))
    assert value_of_policy(theta, UniformPolicy(theta.A)) == 0.0


def test_deterministic_single_path_value():
    S, A, O = 2, 2, 2
    T = np.zeros((1, S, A, S))
    T[0, :, :, 1] = 1.0
    Ok = np.zeros((1, S, A, O))
    Ok[0, 0, :, 1] = 1.0
    Ok[0, 1, :, 0] = 1.0
    theta = LmdpPsi(np.ones(1), np.array([[1.0, 0.0]]), T, Ok, np.ones((1, 1)),
                    np.array([-0.5, 1.0]), 3)
    assert value_of_policy(theta, TablePolicy({}, A)) == pytest.approx(1.0 - 0.5 - 0.5)


def test_value_invariant_under_context_relabeling(rng):
    theta = random_instance(rng, M=3, S=2, A=2, O=2, I=4, H=2)
    pol = random_blind_policies(theta, rng, 2)[1]
    informed = InformedPolicy({0: random_blind_policies(theta, rng, 1)[0]}, theta.A, pol)
    for p in (pol, informed):
        assert value_of_policy(theta.permute_contexts([2, 0, 1]), p) == pytest.approx(
            value_of_policy(theta, p), abs=1e-12)


def test_single_context_blind_equals_informed_twin(rng):
    theta = random_instance(rng, M=1, S=2, A=2, O=2, I=3, H=3)
    pol = random_blind_policies(theta, rng, 2)[1]
    assert value_of_policy(theta, pol) == pytest.approx(
        value_of_policy(theta, InformedPolicy.ignoring_side_info(pol)), abs=1e-12)


def test_enumeration_budget_raises_size_error(rng):
    theta = random_instance(rng, M=2, S=3, A=2, O=2, I=3, H=4)
    with pytest.raises(SizeError) as err:
        value_of_policy(theta, UniformPolicy(theta.A), budget=10)
    assert err.value.size is not None and err.value.size > 10


def test_model_class_requires_shared_spaces(rng):
    a = random_instance(rng, H=2)
    b = random_instance(rng, H=3)
    with pytest.raises(ConfigError):
        ModelClass([a, b])
    with pytest.raises(ConfigError):
        ModelClass([])


def test_policy_action_count_checked(small_instance):
    with pytest.raises(ConfigError):
        sample_episode(small_instance, UniformPolicy(3), np.random.default_rng(0))
