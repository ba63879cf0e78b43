"""Exact finite-horizon planners over blind and informed policy classes.

Planning runs backward induction on ``(t, s_t, belief over contexts)``.  The
unnormalized per-context weight vector ``w`` of a prefix carries its mass
``|w|_1`` and its belief ``w / |w|_1``; both objectives used here are
homogeneous of degree one in ``w``, so values are memoized per unit mass.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .env import DEFAULT_BUDGET, LmdpPsi, expected_return, tree_size_bound
from .errors import ConfigError, SizeError
from .policies import (BlindPolicy, InformedPolicy, Prefix, StochasticPolicy, TablePolicy,
                       UniformPolicy, is_informed)

__all__ = [
    "BlindPolicy", "InformedPolicy", "TablePolicy", "StochasticPolicy", "UniformPolicy",
    "BonusSpec", "plan_blind_optimal", "plan_informed_optimal", "plan_bonus_optimal",
    "enumerate_policies_oracle", "evaluate_policy", "bonus_reward_fn",
]

BELIEF_DIGITS = 12
TIE_TOL = 1e-12


@dataclass
class BonusSpec:
    """Reference model, regularizer and inverse design matrices per (t, s, a).

    Missing keys stand for an unvisited ``x``, i.e. ``Lambda = lambda0 * I``.
    """
    model: LmdpPsi
    lambda0: float
    inverses: Dict[Tuple[int, int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ConfigError("lambda0 must be positive")
        self._default = np.eye(self.model.I) / self.lambda0

    def inverse(self, t: int, s: int, a: int) -> np.ndarray:
        return self.inverses.get((t, s, a), self._default)

    def check(self, tol: float = 1e-9) -> bool:
        """Every design matrix has smallest eigenvalue at least lambda0 - tol."""
        for inv in self.inverses.values():
            lam = np.linalg.eigvalsh(np.linalg.inv(inv)).min()
            if lam < self.lambda0 - tol:
                return False
        return True

    def bonus(self, t: int, s: int, a: int, b_bar: np.ndarray) -> float:
        return float(np.sqrt(max(b_bar @ self.inverse(t, s, a) @ b_bar, 0.0)))


def bonus_reward_fn(spec: BonusSpec):
    """Per-step objective ``|w| * |E w / |w||_{Lambda^-1}`` for tree enumeration."""
    E = spec.model.emission

    def step(t, s, a, w):
        mass = float(w.sum())
        if mass <= 0.0:
            return 0.0
        return mass * spec.bonus(t, s, a, E @ (w / mass))

    return step


# ---------------------------------------------------------------------------
# belief dynamic program
# ---------------------------------------------------------------------------

class _BeliefDP:
    """Backward induction keyed on (t, s, normalized weights)."""

    def __init__(self, theta: LmdpPsi, restriction: str = "full", step_reward=None,
                 quantize: bool = True, budget: int = DEFAULT_BUDGET):
        if restriction not in ("full", "states"):
            raise ConfigError(f"unknown restriction {restriction!r}")
        self.theta = theta
        self.restriction = restriction
        self.step_reward = step_reward
        self.quantize = quantize
        self.budget = budget
        self.memo: Dict[tuple, Tuple[float, int]] = {}

    def key(self, t: int, s: int, u: np.ndarray) -> tuple:
        if self.quantize:
            return (t, s, tuple(np.round(u, BELIEF_DIGITS)))
        return (t, s, u.tobytes())

    def children(self, s: int, a: int, w: np.ndarray):
        """(label, s', child weights) with positive mass; label is (o, s') or (s',)."""
        th = self.theta
        out = []
        if self.restriction == "full":
            for o in range(th.O):
                wo = w * th.obs_kernel[:, s, a, o]
                if not wo.any():
                    continue
                for s2 in range(th.S):
                    w2 = wo * th.transitions[:, s, a, s2]
                    if w2.sum() > 0:
                        out.append(((o, s2), s2, w2))
        else:
            for s2 in range(th.S):
                w2 = w * th.transitions[:, s, a, s2]
                if w2.sum() > 0:
                    out.append(((s2,), s2, w2))
        return out

    def reward(self, t: int, s: int, a: int, u: np.ndarray) -> float:
        if self.step_reward is None:
            return float(u @ self.theta.mean_reward[:, s, a])
        return self.step_reward(t, s, a, u)

    def value(self, t: int, s: int, w: np.ndarray) -> float:
        mass = float(w.sum())
        if mass <= 0.0:
            return 0.0
        return mass * self.solve(t, s, w / mass)[0]

    def solve(self, t: int, s: int, u: np.ndarray) -> Tuple[float, int]:
        k = self.key(t, s, u)
        hit = self.memo.get(k)
        if hit is not None:
            return hit
        if len(self.memo) >= self.budget:
            raise SizeError(f"belief DP exceeds budget of {self.budget} nodes",
                            size=tree_size_bound(self.theta, False), budget=self.budget)
        best, best_a = -np.inf, 0
        for a in range(self.theta.A):
            q = self.reward(t, s, a, u)
            if t < self.theta.H:
                for _, s2, w2 in self.children(s, a, u):
                    q += self.value(t + 1, s2, w2)
            if q > best + TIE_TOL:
                best, best_a = q, a
        self.memo[k] = (best, best_a)
        return best, best_a

    def action(self, t: int, s: int, w: np.ndarray) -> int:
        mass = float(w.sum())
        return self.solve(t, s, w / mass)[1]

    def roots(self, w0: np.ndarray):
        for s1 in range(self.theta.S):
            w = w0 * self.theta.init_dist[:, s1]
            if w.sum() > 0:
                yield s1, w

    def plan_from(self, w0: np.ndarray) -> Tuple[TablePolicy, float]:
        """Optimal deterministic policy over the prefixes reachable from ``w0``."""
        table: Dict[Prefix, int] = {}
        value = 0.0
        for s1, w in self.roots(w0):
            value += self.value(1, s1, w)
            stack = [((s1,), 1, s1, w)]
            while stack:
                key, t, s, w = stack.pop()
                a = self.action(t, s, w)
                table[key] = a
                if t == self.theta.H:
                    continue
                for label, s2, w2 in self.children(s, a, w):
                    stack.append((key + ((a,) + label if self.restriction == "full" else label), t + 1, s2, w2))
        return TablePolicy(table, self.theta.A, self.restriction), value


def plan_blind_optimal(theta: LmdpPsi, restriction: str = "full",
                       budget: int = DEFAULT_BUDGET) -> Tuple[TablePolicy, float]:
    """Optimal side-information-blind policy and its exact value."""
    dp = _BeliefDP(theta, restriction, budget=budget)
    return dp.plan_from(theta.mixing.copy())


def plan_informed_optimal(theta: LmdpPsi, restriction: str = "full",
                          budget: int = DEFAULT_BUDGET) -> Tuple[InformedPolicy, float]:
    """Optimal policy given iota: one blind plan per symbol from the prior p * P(iota | .)."""
    dp = _BeliefDP(theta, restriction, budget=budget)
    per_iota, value = {}, 0.0
    for iota in range(theta.I):
        w0 = theta.mixing * theta.emission[iota]
        if not w0.any():
            continue
        pol, v = dp.plan_from(w0)
        per_iota[iota] = pol
        value += v
    fallback = TablePolicy({}, theta.A, restriction)
    return InformedPolicy(per_iota, theta.A, fallback), value


def plan_bonus_optimal(spec: BonusSpec, budget: int = DEFAULT_BUDGET) -> Tuple[TablePolicy, float]:
    """Blind policy maximizing the expected cumulative elliptical bonus under ``spec.model``.

    Beliefs are keyed by their exact bytes, so the search is the raw history
    tree with only bitwise-identical subproblems shared.
    """
    theta = spec.model
    if tree_size_bound(theta, informed=False) > budget:
        raise SizeError(f"history tree of {tree_size_bound(theta, False)} nodes exceeds budget {budget}",
                        size=tree_size_bound(theta, False), budget=budget)
    E = theta.emission

    def step(t, s, a, u):
        return spec.bonus(t, s, a, E @ u)

    dp = _BeliefDP(theta, "full", step_reward=step, quantize=False, budget=budget)
    return dp.plan_from(theta.mixing.copy())


# ---------------------------------------------------------------------------
# exact evaluation and the brute-force oracle
# ---------------------------------------------------------------------------

def evaluate_policy(theta: LmdpPsi, policy, objective: str = "value",
                    bonus: Optional[BonusSpec] = None, budget: int = DEFAULT_BUDGET) -> float:
    """Exact expectation of ``objective`` ("value" or "bonus") by tree enumeration."""
    if objective == "value":
        return expected_return(theta, policy, budget)
    if objective == "bonus":
        if bonus is None:
            raise ConfigError("bonus objective needs a BonusSpec")
        return expected_return(theta, policy, budget, step_reward=bonus_reward_fn(bonus))
    raise ConfigError(f"unknown objective {objective!r}")


def _count_policies(theta, key, t, s, w, restriction, cap):
    """Number of deterministic policies on the reachable subtree (capped)."""
    total = 0
    for a in range(theta.A):
        n = 1
        if t < theta.H:
            for label, s2, w2 in _oracle_children(theta, s, a, w, restriction):
                n *= _count_policies(theta, None, t + 1, s2, w2, restriction, cap)
                if n > cap:
                    return cap + 1
        total += n
        if total > cap:
            return cap + 1
    return total


def _oracle_children(theta, s, a, w, restriction):
    out = []
    for s2 in range(theta.S):
        if restriction == "full":
            for o in range(theta.O):
                w2 = w * theta.obs_kernel[:, s, a, o] * theta.transitions[:, s, a, s2]
                if w2.sum() > 0:
                    out.append(((a, o, s2), s2, w2))
        else:
            w2 = w * theta.transitions[:, s, a, s2]
            if w2.sum() > 0:
                out.append(((s2,), s2, w2))
    out.sort(key=lambda c: c[0])
    return out


def _policy_tables(theta, key, t, s, w, restriction):
    """Yield every deterministic decision table below ``key``, lexicographically."""
    for a in range(theta.A):
        subtrees = []
        if t < theta.H:
            for label, s2, w2 in _oracle_children(theta, s, a, w, restriction):
                child_key = key + label
                subtrees.append(list(_policy_tables(theta, child_key, t + 1, s2, w2, restriction)))
        for combo in itertools.product(*subtrees):
            table = {key: a}
            for sub in combo:
                table.update(sub)
            yield table


def _root_tables(theta, w0, restriction, budget):
    roots = [(s1, w0 * theta.init_dist[:, s1]) for s1 in range(theta.S)]
    roots = [(s1, w) for s1, w in roots if w.sum() > 0]
    count = 1
    for s1, w in roots:
        count *= _count_policies(theta, (s1,), 1, s1, w, restriction, budget)
        if count > budget:
            raise SizeError(f"more than {budget} deterministic policies", size=count, budget=budget)
    per_root = [list(_policy_tables(theta, (s1,), 1, s1, w, restriction)) for s1, w in roots]
    for combo in itertools.product(*per_root):
        table = {}
        for sub in combo:
            table.update(sub)
        yield table


def enumerate_policies_oracle(theta: LmdpPsi, policy_class: str = "blind", objective: str = "value",
                              bonus: Optional[BonusSpec] = None, restriction: str = "full",
                              budget: int = DEFAULT_BUDGET):
    """Exhaustive search over deterministic policies on the reachable history tree.

    Each candidate is scored by ``evaluate_policy``; the first maximizer in
    lexicographic order of its decision table wins.  The informed class is
    searched one symbol at a time, which is exact because the objective is a
    sum of per-symbol terms.
    """
    if policy_class not in ("blind", "informed"):
        raise ConfigError(f"unknown policy class {policy_class!r}")
    if objective == "bonus" and policy_class != "blind":
        raise ConfigError("the bonus objective is defined for blind policies")
    model = bonus.model if objective == "bonus" else theta

    def best_of(w0, score):
        best, best_pol = -np.inf, None
        for table in _root_tables(model, w0, restriction, budget):
            pol = TablePolicy(table, model.A, restriction)
            v = score(pol)
            if v > best + TIE_TOL:
                best, best_pol = v, pol
        return best_pol

    if policy_class == "blind":
        pol = best_of(model.mixing.copy(), lambda p: evaluate_policy(model, p, objective, bonus, budget))
        return pol, evaluate_policy(model, pol, objective, bonus, budget)
    fallback = TablePolicy({}, model.A, restriction)
    per_iota = {}
    for iota in range(model.I):
        w0 = model.mixing * model.emission[iota]
        if not w0.any():
            continue
        # same tree, prior p * P(iota | .): the blind value there is this symbol's share
        restricted = model.replace(mixing=w0)
        per_iota[iota] = best_of(w0, lambda p: evaluate_policy(restricted, p, "value", None, budget))
    pol = InformedPolicy(per_iota, model.A, fallback)
    return pol, evaluate_policy(model, pol, "value", None, budget)
