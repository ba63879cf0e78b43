import numpy as np
import pytest

from lmdp_psi.env import LmdpPsi, random_instance, value_of_policy
from lmdp_psi.errors import ConfigError, SizeError
from lmdp_psi.harness import load_fixture
from lmdp_psi.planning import (BonusSpec, enumerate_policies_oracle, evaluate_policy, plan_blind_optimal,
                               plan_bonus_optimal, plan_informed_optimal)
from lmdp_psi.policies import TablePolicy, UniformPolicy

from conftest import identity_emission_instance, mdp_value_iteration


def _mdp_parts(theta, m):
    R = theta.obs_kernel[m] @ theta.reward
    return theta.transitions[m], R, theta.init_dist[m]


def test_single_context_matches_value_iteration(rng):
    for _ in range(5):
        theta = random_instance(rng, M=1, S=3, A=2, O=2, I=2, H=3)
        pol, v = plan_blind_optimal(theta)
        assert v == pytest.approx(mdp_value_iteration(*_mdp_parts(theta, 0), theta.H), abs=1e-10)
        assert value_of_policy(theta, pol) == pytest.approx(v, abs=1e-10)


def test_zero_reward_gives_zero_value(small_instance):
    theta = small_instance.replace(reward=np.zeros(small_instance.O))
    assert plan_blind_optimal(theta)[1] == 0.0
    assert plan_informed_optimal(theta)[1] == 0.0


@pytest.mark.parametrize("restriction", ["full", "states"])
def test_planners_match_exhaustive_oracle(restriction):
    rng = np.random.default_rng(2024)
    for _ in range(6):
        theta = random_instance(rng, M=2, S=2, A=2, O=2, I=2, H=2)
        _, vb = plan_blind_optimal(theta, restriction)
        _, vo = enumerate_policies_oracle(theta, "blind", restriction=restriction)
        assert vb == pytest.approx(vo, abs=1e-10)
        _, vi = plan_informed_optimal(theta, restriction)
        _, voi = enumerate_policies_oracle(theta, "informed", restriction=restriction)
        assert vi == pytest.approx(voi, abs=1e-10)


def test_returned_policies_achieve_reported_values(rng):
    theta = random_instance(rng, M=3, S=2, A=2, O=2, I=3, H=3)
    for planner in (plan_blind_optimal, plan_informed_optimal):
        pol, v = planner(theta)
        assert value_of_policy(theta, pol) == pytest.approx(v, abs=1e-10)


def test_single_action_oracle_returns_the_unique_policy(rng):
    theta = random_instance(rng, M=2, S=2, A=1, O=2, I=2, H=2)
    pol, v = enumerate_policies_oracle(theta)
    assert v == pytest.approx(value_of_policy(theta, TablePolicy({}, 1)), abs=1e-12)


def test_uninformative_side_info_closes_the_gap(rng):
    theta = random_instance(rng, M=3, S=2, A=2, O=2, I=4, H=2)
    col = rng.dirichlet(np.ones(theta.I))
    theta = theta.replace(emission=np.tile(col[:, None], (1, theta.M)))
    assert plan_informed_optimal(theta)[1] == pytest.approx(plan_blind_optimal(theta)[1], abs=1e-12)


def test_revealing_side_info_gives_per_context_optimum(rng):
    theta = identity_emission_instance(rng, M=3, S=2, A=2, O=2, H=3)
    target = sum(theta.mixing[m] * mdp_value_iteration(*_mdp_parts(theta, m), theta.H)
                 for m in range(theta.M))
    assert plan_informed_optimal(theta)[1] == pytest.approx(target, abs=1e-10)


def test_hard_fixture_informed_beats_blind():
    theta = load_fixture("hard-m8")
    assert plan_informed_optimal(theta)[1] > plan_blind_optimal(theta)[1] + 1e-6


def test_value_ordering(rng):
    for _ in range(5):
        theta = random_instance(rng, M=3, S=2, A=3, O=2, I=3, H=2)
        vi, vb = plan_informed_optimal(theta)[1], plan_blind_optimal(theta)[1]
        vu = value_of_policy(theta, UniformPolicy(theta.A))
        assert vi >= vb - 1e-12 and vb >= vu - 1e-12


def test_blind_value_invariant_under_side_info_relabeling(rng):
    theta = random_instance(rng, M=2, S=2, A=2, O=2, I=4, H=3)
    v = plan_blind_optimal(theta)[1]
    assert plan_blind_optimal(theta.permute_side_info([3, 1, 0, 2]))[1] == pytest.approx(v, abs=1e-12)
    assert plan_informed_optimal(theta.permute_side_info([3, 1, 0, 2]))[1] == pytest.approx(
        plan_informed_optimal(theta)[1], abs=1e-12)


def test_planner_budget_raises(rng):
    theta = random_instance(rng, M=2, S=3, A=2, O=2, I=2, H=4)
    with pytest.raises(SizeError):
        plan_blind_optimal(theta, budget=5)
    with pytest.raises(SizeError):
        plan_bonus_optimal(BonusSpec(theta, 1.0), budget=5)
    with pytest.raises(ConfigError):
        plan_blind_optimal(theta, restriction="observations")


def test_initial_bonus_closed_form_on_one_step_instance(rng):
    theta = random_instance(rng, M=2, S=3, A=2, O=2, I=3, H=1)
    lam = 2.5
    # with lambda0 I everywhere every action has bonus |b_bar|_2 / sqrt(lam)
    target = 0.0
    for s in range(theta.S):
        w = theta.mixing * theta.init_dist[:, s]
        target += w.sum() * np.linalg.norm(theta.emission @ (w / w.sum())) / np.sqrt(lam)
    _, v = plan_bonus_optimal(BonusSpec(theta, lam))
    assert v == pytest.approx(target, abs=1e-10)


def test_repeated_rank_one_updates_shrink_bonus(rng):
    theta = random_instance(rng, M=2, S=2, A=2, O=2, I=3, H=1)
    b = rng.dirichlet(np.ones(3))
    lam = 0.7
    for n in (1, 10, 100):
        inv = np.linalg.inv(lam * np.eye(3) + n * np.outer(b, b))
        spec = BonusSpec(theta, lam, {(1, 0, 0): inv})
        assert spec.bonus(1, 0, 0, b) == pytest.approx(
            np.linalg.norm(b) / np.sqrt(lam + n * b @ b), abs=1e-12)
        assert spec.check()


def _random_spec(theta, rng, lam):
    inv = {}
    for t in range(1, theta.H + 1):
        for s in range(theta.S):
            for a in range(theta.A):
                X = rng.random((3, theta.I))
                inv[(t, s, a)] = np.linalg.inv(lam * np.eye(theta.I) + X.T @ X)
    return BonusSpec(theta, lam, inv)


def test_bonus_planner_matches_oracle_and_evaluator(rng):
    for _ in range(4):
        theta = random_instance(rng, M=2, S=2, A=2, O=2, I=3, H=2)
        spec = _random_spec(theta, rng, 0.5)
        pol, v = plan_bonus_optimal(spec)
        _, vo = enumerate_policies_oracle(theta, "blind", "bonus", bonus=spec)
        assert v == pytest.approx(vo, abs=1e-10)
        assert evaluate_policy(theta, pol, "bonus", spec) == pytest.approx(v, abs=1e-10)


def test_bonus_value_does_not_increase_after_an_update(rng):
    theta = random_instance(rng, M=2, S=2, A=2, O=2, I=3, H=2)
    spec = _random_spec(theta, rng, 1.0)
    v0 = plan_bonus_optimal(spec)[1]
    for x in list(spec.inverses)[:4]:
        b = rng.dirichlet(np.ones(theta.I))
        A = np.linalg.inv(spec.inverses[x]) + np.outer(b, b)
        spec = BonusSpec(theta, 1.0, {**spec.inverses, x: np.linalg.inv(A)})
        v1 = plan_bonus_optimal(spec)[1]
        assert v1 <= v0 + 1e-12
        v0 = v1


def test_single_context_bonus_depends_on_counts_only(rng):
    theta = random_instance(rng, M=1, S=2, A=2, O=2, I=3, H=2)
    b = theta.emission[:, 0]
    lam = 1.0
    inv = {(1, s, 0): np.linalg.inv(lam * np.eye(3) + 4 * np.outer(b, b)) for s in range(2)}
    pol, _ = plan_bonus_optimal(BonusSpec(theta, lam, inv))
    # the unvisited action is strictly more attractive at step one
    assert all(pol.action((s,)) == 1 for s in range(2))


def test_bonus_spec_check_detects_small_eigenvalue(small_instance):
    spec = BonusSpec(small_instance, 1.0, {(1, 0, 0): np.eye(3) * 2.0})
    assert not spec.check()
    with pytest.raises(ConfigError):
        BonusSpec(small_instance, 0.0)


def test_deterministic_outputs(rng):
    theta = random_instance(rng, M=2, S=2, A=2, O=2, I=3, H=3)
    a, b = plan_blind_optimal(theta)[0], plan_blind_optimal(theta)[0]
    assert a.content_hash() == b.content_hash()
