"""LMDP-Psi environments: definition, validation, simulation, exact values.

Arrays follow the shapes
    mixing       (M,)
    init_dist    (M, S)          state entered at t=1 from the dummy start
    transitions  (M, S, A, S)
    obs_kernel   (M, S, A, O)
    emission     (I, M)          column m is P(iota | m)
    reward       (O,)

The dummy step t=0 is folded into ``init_dist`` and never stored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, SizeError
from .policies import BlindPolicy, InformedPolicy, Prefix, is_informed

SIMPLEX_TOL = 1e-12
DEFAULT_BUDGET = 10**6


@dataclass(frozen=True, eq=False)
class LmdpPsi:
    mixing: np.ndarray
    init_dist: np.ndarray
    transitions: np.ndarray
    obs_kernel: np.ndarray
    emission: np.ndarray
    reward: np.ndarray
    horizon: int
    name: str = ""

    def __post_init__(self):
        for attr in ("mixing", "init_dist", "transitions", "obs_kernel", "emission", "reward"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "horizon", int(self.horizon))
        M = self.mixing.shape[0]
        S = self.init_dist.shape[-1]
        A = self.transitions.shape[2] if self.transitions.ndim == 4 else -1
        O = self.obs_kernel.shape[-1] if self.obs_kernel.ndim == 4 else -1
        expected = {
            "init_dist": (M, S),
            "transitions": (M, S, A, S),
            "obs_kernel": (M, S, A, O),
            "reward": (O,),
        }
        for attr, shape in expected.items():
            if getattr(self, attr).shape != shape:
                raise ConfigError(f"{attr} has shape {getattr(self, attr).shape}, expected {shape}")
        if self.emission.ndim != 2 or self.emission.shape[1] != M:
            raise ConfigError(f"emission has shape {self.emission.shape}, expected (I, {M})")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        # expected immediate reward per (m, s, a)
        mean_reward = self.obs_kernel @ self.reward
        mean_reward.setflags(write=False)
        object.__setattr__(self, "mean_reward", mean_reward)

    @property
    def M(self) -> int:
        return self.mixing.shape[0]

    @property
    def S(self) -> int:
        return self.init_dist.shape[1]

    @property
    def A(self) -> int:
        return self.transitions.shape[2]

    @property
    def O(self) -> int:
        return self.obs_kernel.shape[3]

    @property
    def I(self) -> int:
        return self.emission.shape[0]

    @property
    def H(self) -> int:
        return self.horizon

    def side_info_marginal(self) -> np.ndarray:
        return self.emission @ self.mixing

    def side_info_posterior(self, iota: int) -> np.ndarray:
        w = self.mixing * self.emission[iota]
        return w / w.sum()

    def permute_contexts(self, perm: Sequence[int]) -> "LmdpPsi":
        perm = np.asarray(perm)
        return LmdpPsi(self.mixing[perm], self.init_dist[perm], self.transitions[perm],
                       self.obs_kernel[perm], self.emission[:, perm], self.reward,
                       self.horizon, self.name)

    def permute_side_info(self, perm: Sequence[int]) -> "LmdpPsi":
        return LmdpPsi(self.mixing, self.init_dist, self.transitions, self.obs_kernel,
                       self.emission[np.asarray(perm)], self.reward, self.horizon, self.name)

    def replace(self, **kw) -> "LmdpPsi":
        fields = dict(mixing=self.mixing, init_dist=self.init_dist, transitions=self.transitions,
                      obs_kernel=self.obs_kernel, emission=self.emission, reward=self.reward,
                      horizon=self.horizon, name=self.name)
        fields.update(kw)
        return LmdpPsi(**fields)

    def same_spaces(self, other: "LmdpPsi") -> bool:
        return (self.S, self.A, self.O, self.I, self.H) == (other.S, other.A, other.O, other.I, other.H)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    iota: int
    m: int
    states: Tuple[int, ...]
    actions: Tuple[int, ...]
    observations: Tuple[int, ...]
    rewards: Tuple[float, ...] = field(default=())

    @property
    def H(self) -> int:
        return len(self.states)

    def prefix(self, t: int) -> Prefix:
        """History prefix ending in ``s_t`` (t is 1-based)."""
        out = []
        for h in range(t - 1):
            out += [self.states[h], self.actions[h], self.observations[h]]
        out.append(self.states[t - 1])
        return tuple(out)

    def flat(self) -> Tuple[int, ...]:
        out = []
        for h in range(self.H):
            out += [self.states[h], self.actions[h], self.observations[h]]
        return tuple(out)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


@dataclass
class ModelClass:
    models: List[LmdpPsi]
    truth_index: Optional[int] = None

    def __post_init__(self):
        if not self.models:
            raise ConfigError("model class must be non-empty")
        ref = self.models[0]
        for k, th in enumerate(self.models):
            if not ref.same_spaces(th):
                raise ConfigError(f"model {k} does not share spaces with model 0")
        if self.truth_index is not None and not 0 <= self.truth_index < len(self.models):
            raise ConfigError("truth_index out of range")

    def __len__(self) -> int:
        return len(self.models)

    def __getitem__(self, k: int) -> LmdpPsi:
        return self.models[k]

    def __iter__(self):
        return iter(self.models)


@dataclass
class ValidationReport:
    simplex_violations: List[str] = field(default_factory=list)
    rank_deficient: bool = False
    emission_rank: int = 0
    reward_violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.simplex_violations or self.rank_deficient or self.reward_violations)

    def __bool__(self) -> bool:
        # truthy when something is wrong, so ``if report:`` reads as "has problems"
        return not self.ok

    def issues(self) -> List[str]:
        out = list(self.simplex_violations) + list(self.reward_violations)
        if self.rank_deficient:
            out.append(f"emission rank {self.emission_rank} < number of contexts")
        return out


def _simplex_issues(name: str, arr: np.ndarray, axis: int) -> List[str]:
    issues = []
    sums = arr.sum(axis=axis)
    bad_sum = np.argwhere(np.abs(sums - 1.0) > SIMPLEX_TOL)
    for idx in bad_sum:
        issues.append(f"{name}{tuple(int(i) for i in idx)} sums to {sums[tuple(idx)]:.15g}")
    neg = np.moveaxis(arr < 0, axis, -1).any(axis=-1)
    for idx in np.argwhere(neg):
        issues.append(f"{name}{tuple(int(i) for i in idx)} has a negative entry")
    return issues


def validate_model(theta: LmdpPsi) -> ValidationReport:
    rep = ValidationReport()
    rep.simplex_violations += _simplex_issues("mixing", theta.mixing, 0)
    rep.simplex_violations += _simplex_issues("init_dist", theta.init_dist, 1)
    rep.simplex_violations += _simplex_issues("transitions", theta.transitions, 3)
    rep.simplex_violations += _simplex_issues("obs_kernel", theta.obs_kernel, 3)
    rep.simplex_violations += _simplex_issues("emission", theta.emission, 0)
    rep.emission_rank = int(np.linalg.matrix_rank(theta.emission))
    rep.rank_deficient = rep.emission_rank < theta.M
    for o in np.flatnonzero(np.abs(theta.reward) > 1.0):
        rep.reward_violations.append(f"reward[{o}] = {theta.reward[o]} outside [-1, 1]")
    return rep


def draw(rng: np.random.Generator, p: np.ndarray) -> int:
    """Inverse-CDF draw; one uniform per call keeps streams reproducible."""
    c = np.cumsum(p)
    i = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(i, len(p) - 1)


def sample_episode(theta: LmdpPsi, policy, rng: np.random.Generator) -> TrajectoryRecord:
    """Draw m, iota, then roll out H steps under ``policy`` (blind or informed)."""
    informed = is_informed(policy)
    if policy.num_actions != theta.A:
        raise ConfigError(f"policy has {policy.num_actions} actions, model has {theta.A}")
    m = draw(rng, theta.mixing)
    iota = draw(rng, theta.emission[:, m])
    s = draw(rng, theta.init_dist[m])
    states, actions, obs = [], [], []
    prefix: Prefix = (s,)
    for t in range(theta.H):
        pa = policy.probs(iota, prefix) if informed else policy.probs(prefix)
        a = draw(rng, pa)
        o = draw(rng, theta.obs_kernel[m, s, a])
        states.append(s)
        actions.append(a)
        obs.append(o)
        if t < theta.H - 1:
            s = draw(rng, theta.transitions[m, s, a])
            prefix = prefix + (a, o, s)
    rewards = tuple(float(theta.reward[o]) for o in obs)
    return TrajectoryRecord(iota, m, tuple(states), tuple(actions), tuple(obs), rewards)


def context_likelihoods(theta: LmdpPsi, states, actions, observations) -> np.ndarray:
    """Per-context policy-free likelihood ``init * prod O * T`` of a trajectory."""
    H = len(states)
    w = theta.init_dist[:, states[0]].copy()
    for t in range(H):
        s, a, o = states[t], actions[t], observations[t]
        w *= theta.obs_kernel[:, s, a, o]
        if t < H - 1:
            w *= theta.transitions[:, s, a, states[t + 1]]
    return w


def policy_probability(policy, iota: Optional[int], states, actions, observations) -> float:
    """pi(tau): product of the action probabilities along the trajectory."""
    informed = is_informed(policy)
    prob = 1.0
    prefix: Prefix = ()
    for t in range(len(states)):
        prefix = prefix + (states[t],)
        pa = policy.probs(iota, prefix) if informed else policy.probs(prefix)
        prob *= float(pa[actions[t]])
        prefix = prefix + (actions[t], observations[t])
    return prob


def trajectory_probability(theta: LmdpPsi, policy, iota: int, states, actions, observations) -> float:
    """Exact P^pi(iota, tau) by the direct latent-mixture formula."""
    if len(states) != theta.H:
        raise ConfigError(f"trajectory length {len(states)} != horizon {theta.H}")
    w = theta.mixing * theta.emission[iota] * context_likelihoods(theta, states, actions, observations)
    return float(w.sum()) * policy_probability(policy, iota, states, actions, observations)


def tree_size_bound(theta: LmdpPsi, informed: bool = True) -> int:
    branch = theta.S * theta.A * theta.O
    nodes = sum(theta.S * branch ** t for t in range(theta.H))
    return nodes * (theta.I if informed else 1)


class _Counter:
    def __init__(self, budget: int, bound: int):
        self.n = 0
        self.budget = budget
        self.bound = bound

    def tick(self) -> None:
        self.n += 1
        if self.n > self.budget:
            raise SizeError(
                f"enumeration exceeds budget of {self.budget} nodes "
                f"(worst-case tree size {self.bound})", size=self.bound, budget=self.budget)


def _tree_return(theta: LmdpPsi, probs_fn, w: np.ndarray, s: int, prefix: Prefix, t: int,
                 counter: _Counter, step_reward=None) -> float:
    """Expected return below one decision node.

    ``w`` holds unnormalized per-context weights (mass of the prefix, policy
    factors included).  ``step_reward(t, s, a, w)`` overrides the default
    reward term ``sum_m w_m E[r | m, s, a]``.
    """
    counter.tick()
    pa = probs_fn(prefix)
    total = 0.0
    last = t == theta.H
    for a in np.flatnonzero(pa):
        wa = w * pa[a]
        if step_reward is None:
            total += float(wa @ theta.mean_reward[:, s, a])
        else:
            total += step_reward(t, s, int(a), wa)
        if last:
            continue
        # children weights, shape (O, S', M)
        child = wa[None, None, :] * theta.obs_kernel[:, s, a, :].T[:, None, :] \
            * theta.transitions[:, s, a, :].T[None, :, :]
        mass = child.sum(axis=2)
        for o, s2 in zip(*np.nonzero(mass)):
            total += _tree_return(theta, probs_fn, child[o, s2], int(s2),
                                  prefix + (int(a), int(o), int(s2)), t + 1, counter, step_reward)
    return total


def expected_return(theta: LmdpPsi, policy, budget: int = DEFAULT_BUDGET, step_reward=None) -> float:
    """Exact expectation of a per-step objective by trajectory-tree enumeration."""
    informed = is_informed(policy)
    counter = _Counter(budget, tree_size_bound(theta, informed))
    total = 0.0
    if informed:
        roots = [(iota, theta.mixing * theta.emission[iota]) for iota in range(theta.I)]
    else:
        roots = [(None, theta.mixing.copy())]
    for iota, w0 in roots:
        if not w0.any():
            continue
        if informed:
            blind = policy.policy_for(iota)
            probs_fn = blind.probs
        else:
            probs_fn = policy.probs
        for s1 in range(theta.S):
            w = w0 * theta.init_dist[:, s1]
            if w.any():
                total += _tree_return(theta, probs_fn, w, s1, (s1,), 1, counter, step_reward)
    return total


def value_of_policy(theta: LmdpPsi, policy, budget: int = DEFAULT_BUDGET) -> float:
    """Exact V^pi = E[sum_t r(o_t)], enumerating contexts, side info and the trajectory tree."""
    return expected_return(theta, policy, budget)


def enumerate_trajectories(theta: LmdpPsi):
    """Yield every (states, actions, observations) tuple of length H."""
    import itertools

    H = theta.H
    for s in itertools.product(range(theta.S), repeat=H):
        for a in itertools.product(range(theta.A), repeat=H):
            for o in itertools.product(range(theta.O), repeat=H):
                yield s, a, o


def random_instance(rng: np.random.Generator, M: int = 2, S: int = 2, A: int = 2, O: int = 2,
                    I: int = 3, H: int = 2, concentration: float = 1.0,
                    reward: Optional[np.ndarray] = None) -> LmdpPsi:
    """Random instance with Dirichlet rows; rewards default to ``linspace(0, 1, O)``."""

    def dirichlet(shape, k):
        return rng.dirichlet(np.full(k, concentration), size=shape)

    if reward is None:
        reward = np.linspace(0.0, 1.0, O)
    return LmdpPsi(
        mixing=rng.dirichlet(np.full(M, 2.0)),
        init_dist=dirichlet((M,), S),
        transitions=dirichlet((M, S, A), S),
        obs_kernel=dirichlet((M, S, A), O),
        emission=dirichlet((M,), I).T,
        reward=reward,
        horizon=H,
    )
