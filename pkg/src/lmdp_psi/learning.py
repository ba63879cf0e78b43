"""Model-based learners over a finite model class.

* ``omle_regret_min``: optimistic maximum likelihood within blind policies.
* ``pure_explore``: elliptical-bonus exploration until the planned bonus is small.
* ``explore_then_exploit``: pure exploration, then the learned informed plan.

Regret is always accounted with exact policy values under the true model;
realized rewards are logged alongside.
"""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .env import DEFAULT_BUDGET, LmdpPsi, ModelClass, TrajectoryRecord, sample_episode, value_of_policy
from .errors import ConfigError
from .hardgen import effective_alpha
from .planning import BonusSpec, plan_blind_optimal, plan_bonus_optimal, plan_informed_optimal
from .policies import InformedPolicy, Prefix

RUNLOG_COLUMNS = ("episode", "phase", "model_index", "policy_hash", "V_tilde_or_value",
                  "inst_regret", "cum_regret", "survivors_count", "theta_star_survives",
                  "realized_reward")


# ---------------------------------------------------------------------------
# data and likelihoods
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    iota: int
    trajectory: TrajectoryRecord
    policy_id: str


class Dataset:
    """Append-only list of (iota, trajectory, policy id) records."""

    def __init__(self):
        self._records: List[Record] = []

    def append(self, iota: int, trajectory: TrajectoryRecord, policy_id: str = "") -> None:
        self._records.append(Record(int(iota), trajectory, policy_id))

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, k):
        return self._records[k]


def loglikelihood(theta: LmdpPsi, iota: int, trajectory: TrajectoryRecord) -> float:
    """log sum_m p_m P(iota|m) init_m(s_1) prod_t O_m(o_t|s_t,a_t) T_m(s_{t+1}|s_t,a_t).

    The policy factor is common to every model and left out; impossible
    trajectories give ``-inf``.
    """
    st, ac, ob = trajectory.states, trajectory.actions, trajectory.observations
    H = len(st)
    with np.errstate(divide="ignore"):
        lw = np.log(theta.mixing) + np.log(theta.emission[iota]) + np.log(theta.init_dist[:, st[0]])
        for t in range(H):
            lw = lw + np.log(theta.obs_kernel[:, st[t], ac[t], ob[t]])
            if t < H - 1:
                lw = lw + np.log(theta.transitions[:, st[t], ac[t], st[t + 1]])
    top = lw.max()
    if top == -math.inf:
        return -math.inf
    return float(top + math.log(np.exp(lw - top).sum()))


@dataclass
class ConfidenceSet:
    loglik: np.ndarray
    beta: float
    survivors: List[int]
    mle_index: int

    def contains(self, k: int) -> bool:
        return k in self.survivors


def confidence_from_logliks(loglik: np.ndarray, beta: float) -> ConfidenceSet:
    loglik = np.asarray(loglik, dtype=float)
    top = float(loglik.max())
    mle = int(np.argmax(loglik))            # lowest index among ties
    if math.isinf(top):
        survivors = [k for k in range(len(loglik)) if loglik[k] == top]
    else:
        survivors = [k for k in range(len(loglik)) if loglik[k] >= top - beta]
    return ConfidenceSet(loglik.copy(), float(beta), survivors, mle)


def update_confidence_set(models: ModelClass, data: Dataset, beta: float) -> ConfidenceSet:
    """Models whose total log-likelihood is within ``beta`` of the best."""
    ll = np.zeros(len(models))
    for rec in data:
        for k, th in enumerate(models):
            ll[k] += loglikelihood(th, rec.iota, rec.trajectory)
    return confidence_from_logliks(ll, beta)


def confidence_beta(K: int, num_models: int, delta: float, c_beta: float = 1.0) -> float:
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    return c_beta * math.log(K * num_models / delta)


# ---------------------------------------------------------------------------
# run logs
# ---------------------------------------------------------------------------

@dataclass
class RunLog:
    rows: List[dict] = field(default_factory=list)
    meta: Dict[str, object] = field(default_factory=dict)

    def add(self, **row) -> None:
        missing = set(RUNLOG_COLUMNS) - set(row)
        if missing:
            raise ConfigError(f"run-log row lacks {sorted(missing)}")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    @property
    def cum_regret(self) -> np.ndarray:
        return self.column("cum_regret").astype(float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUNLOG_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in RUNLOG_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _LikelihoodTracker:
    """Running per-model log-likelihoods."""

    def __init__(self, models: ModelClass, beta: float):
        self.models = models
        self.beta = beta
        self.ll = np.zeros(len(models))

    def add(self, iota: int, traj: TrajectoryRecord) -> None:
        for k, th in enumerate(self.models):
            self.ll[k] += loglikelihood(th, iota, traj)

    def current(self) -> ConfidenceSet:
        return confidence_from_logliks(self.ll, self.beta)


def _truth_index(models: ModelClass, theta_star: LmdpPsi) -> Optional[int]:
    if models.truth_index is not None:
        return models.truth_index
    for k, th in enumerate(models):
        if th is theta_star:
            return k
    return None


# ---------------------------------------------------------------------------
# optimistic MLE
# ---------------------------------------------------------------------------

def omle_regret_min(models: ModelClass, theta_star: LmdpPsi, K: int, delta: float,
                    rng: np.random.Generator, c_beta: float = 1.0, restriction: str = "full",
                    budget: int = DEFAULT_BUDGET) -> RunLog:
    """Each round: optimistic (model, blind plan) among survivors, execute, update."""
    if K < 1:
        raise ConfigError("K must be at least 1")
    beta = confidence_beta(K, len(models), delta, c_beta)
    truth = _truth_index(models, theta_star)
    plans = [None] * len(models)          # (policy, optimistic value) per model
    true_values: Dict[int, float] = {}    # value on theta_star of each model's plan
    # V* through the same evaluator as the played policies, so equal policies give exactly zero
    v_star = value_of_policy(theta_star, plan_blind_optimal(theta_star, restriction, budget)[0], budget)
    tracker = _LikelihoodTracker(models, beta)
    log = RunLog(meta=dict(algorithm="omle", K=K, delta=delta, c_beta=c_beta, beta=beta,
                           restriction=restriction, v_star_blind=v_star))
    cum = 0.0
    for k in range(1, K + 1):
        cs = tracker.current()
        best, pick = -math.inf, cs.survivors[0]
        for j in cs.survivors:
            if plans[j] is None:
                plans[j] = plan_blind_optimal(models[j], restriction, budget)
            if plans[j][1] > best + 1e-12:
                best, pick = plans[j][1], j
        policy = plans[pick][0]
        if pick not in true_values:
            true_values[pick] = value_of_policy(theta_star, policy, budget)
        traj = sample_episode(theta_star, policy, rng)
        inst = v_star - true_values[pick]
        cum += inst
        log.add(episode=k, phase="omle", model_index=pick, policy_hash=policy.content_hash(),
                V_tilde_or_value=best, inst_regret=inst, cum_regret=cum,
                survivors_count=len(cs.survivors),
                theta_star_survives=(truth in cs.survivors) if truth is not None else "",
                realized_reward=traj.total_reward)
        tracker.add(traj.iota, traj)
    return log


# ---------------------------------------------------------------------------
# elliptical bonuses
# ---------------------------------------------------------------------------

def prefix_weights(theta: LmdpPsi, prefix: Prefix) -> np.ndarray:
    """Per-context weights p_m init_m(s_1) prod O T of an iota-blind prefix."""
    w = theta.mixing * theta.init_dist[:, prefix[0]]
    for i in range(1, len(prefix), 3):
        s, a, o, s2 = prefix[i - 1], prefix[i], prefix[i + 1], prefix[i + 2]
        w = w * theta.obs_kernel[:, s, a, o] * theta.transitions[:, s, a, s2]
    return w


class BonusAccumulator:
    """Design matrices lambda0 I + sum b b^T per (t, s, a), with inverses."""

    def __init__(self, dim: int, lambda0: float):
        if not lambda0 > 0:
            raise ConfigError("lambda0 must be positive")
        self.dim = dim
        self.lambda0 = float(lambda0)
        self.matrices: Dict[Tuple[int, int, int], np.ndarray] = {}
        self.inverses: Dict[Tuple[int, int, int], np.ndarray] = {}

    def matrix(self, t: int, s: int, a: int) -> np.ndarray:
        m = self.matrices.get((t, s, a))
        return self.lambda0 * np.eye(self.dim) if m is None else m

    def inverse(self, t: int, s: int, a: int) -> np.ndarray:
        m = self.inverses.get((t, s, a))
        return np.eye(self.dim) / self.lambda0 if m is None else m

    def spec(self, model: LmdpPsi) -> BonusSpec:
        return BonusSpec(model, self.lambda0, dict(self.inverses))

    def max_inverse_error(self) -> float:
        err = 0.0
        for x, m in self.matrices.items():
            err = max(err, float(np.abs(m @ self.inverses[x] - np.eye(self.dim)).max()))
        return err


def visit_counts(data: Dataset) -> Counter:
    """Multiplicity of each (t, prefix, a_t) across the dataset."""
    counts: Counter = Counter()
    for rec in data:
        tr = rec.trajectory
        for t in range(1, tr.H + 1):
            counts[(t, tr.prefix(t), tr.actions[t - 1])] += 1
    return counts


def prefix_embedding(theta: LmdpPsi, prefix: Prefix) -> Optional[np.ndarray]:
    """Normalized predictive state E w / |w|_1, or None for a zero-mass prefix."""
    w = prefix_weights(theta, prefix)
    mass = float(w.sum())
    if mass <= 1e-300:
        return None
    return theta.emission @ (w / mass)


def bonus_rebuild(acc: BonusAccumulator, theta_k: LmdpPsi, data, counts: Optional[Counter] = None,
                  cache: Optional[dict] = None) -> BonusAccumulator:
    """Recompute every design matrix with embeddings under ``theta_k``.

    Records sharing a prefix contribute identical rank-one terms, so they are
    grouped by multiplicity; histories with zero mass under ``theta_k`` are
    skipped.  ``cache`` may hold outer products of embeddings keyed by
    ``(id(theta_k), prefix)``; they depend on nothing else.
    """
    if counts is None:
        counts = visit_counts(data)
    out = BonusAccumulator(acc.dim, acc.lambda0)
    sums: Dict[Tuple[int, int, int], np.ndarray] = {}
    for (t, prefix, a), n in counts.items():
        ck = (id(theta_k), prefix)
        if cache is not None and ck in cache:
            bb = cache[ck]
        else:
            b = prefix_embedding(theta_k, prefix)
            bb = None if b is None else np.outer(b, b)
            if cache is not None:
                cache[ck] = bb
        if bb is None:
            continue
        x = (t, prefix[-1], a)
        if x not in sums:
            sums[x] = np.zeros((acc.dim, acc.dim))
        sums[x] += n * bb
    for x, S in sums.items():
        m = acc.lambda0 * np.eye(acc.dim) + S
        out.matrices[x] = m
        out.inverses[x] = np.linalg.inv(m)
    return out


# ---------------------------------------------------------------------------
# pure exploration
# ---------------------------------------------------------------------------

@dataclass
class ExplorationConstants:
    alpha: float
    beta: float
    lambda0_theory: float
    eps_pe_theory: float
    lambda0: float
    eps_pe: float
    c: float


def exploration_constants(M: int, H: int, alpha: float, beta: float, eps: float, c: float = 1.0,
                          lambda0: Optional[float] = None, eps_pe: Optional[float] = None) -> ExplorationConstants:
    """Regularizer and stopping threshold, verbatim and after the scaling knob.

    lambda0 = beta M^2 H^2 / alpha^2 and
    eps_pe = alpha eps / (10 H M^2 sqrt(lambda0 M^2 / alpha^2 + beta)).
    The knob ``c`` multiplies lambda0 and divides eps_pe by ``c**2``.
    """
    if not 0 < c <= 1:
        raise ConfigError("scaling knob c must lie in (0, 1]")
    lam = beta * M ** 2 * H ** 2 / alpha ** 2
    pe = alpha * eps / (10 * H * M ** 2 * math.sqrt(lam * M ** 2 / alpha ** 2 + beta))
    return ExplorationConstants(alpha, beta, lam, pe,
                                c * lam if lambda0 is None else float(lambda0),
                                pe / c ** 2 if eps_pe is None else float(eps_pe), c)


@dataclass
class ExploreResult:
    theta_hat_index: int
    episodes: int
    cap_hit: bool
    log: RunLog
    constants: ExplorationConstants
    data: Dataset


class _RegretBook:
    """Exact per-policy values on the true model, cached by content hash."""

    def __init__(self, theta_star: LmdpPsi, v_star: float, budget: int):
        self.theta_star = theta_star
        self.v_star = v_star
        self.budget = budget
        self.values: Dict[str, float] = {}
        self.cum = 0.0

    @classmethod
    def informed(cls, theta_star: LmdpPsi, budget: int) -> "_RegretBook":
        pol, _ = plan_informed_optimal(theta_star, budget=budget)
        return cls(theta_star, value_of_policy(theta_star, pol, budget), budget)

    def charge(self, policy) -> Tuple[str, float]:
        h = policy.content_hash()
        if h not in self.values:
            self.values[h] = value_of_policy(self.theta_star, policy, self.budget)
        inst = self.v_star - self.values[h]
        self.cum += inst
        return h, inst


def pure_explore(models: ModelClass, theta_star: LmdpPsi, eps: float, delta: float, c: float,
                 rng: np.random.Generator, c_beta: float = 1.0, max_episodes: int = 50_000,
                 alpha: Optional[float] = None, lambda0: Optional[float] = None,
                 eps_pe: Optional[float] = None, budget: int = DEFAULT_BUDGET,
                 _book: Optional[_RegretBook] = None) -> ExploreResult:
    """Play the bonus-maximizing blind policy of the MLE until its bonus value is small.

    The returned model is the MLE at the stopping episode; ``cap_hit`` marks a
    run that used ``max_episodes`` without meeting the threshold.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    if max_episodes < 0:
        raise ConfigError("max_episodes must be non-negative")
    if alpha is None:
        alpha = effective_alpha(theta_star.emission)
    beta = confidence_beta(max(max_episodes, 1), len(models), delta, c_beta)
    consts = exploration_constants(theta_star.M, theta_star.H, alpha, beta, eps, c, lambda0, eps_pe)
    truth = _truth_index(models, theta_star)
    if _book is None:
        _book = _RegretBook.informed(theta_star, budget)
    tracker = _LikelihoodTracker(models, beta)
    data = Dataset()
    counts: Counter = Counter()
    acc = BonusAccumulator(theta_star.I, consts.lambda0)
    embed_cache: dict = {}
    log = RunLog(meta=dict(algorithm="pure_explore", restriction="full", eps=eps, delta=delta, c=c, c_beta=c_beta,
                           alpha=alpha, beta=beta, lambda0_theory=consts.lambda0_theory,
                           eps_pe_theory=consts.eps_pe_theory, lambda0=consts.lambda0,
                           eps_pe=consts.eps_pe, v_star=_book.v_star))
    k = 0
    while True:
        cs = tracker.current()
        pick = cs.mle_index
        theta_k = models[pick]
        acc = bonus_rebuild(acc, theta_k, data, counts, embed_cache)
        policy, v_tilde = plan_bonus_optimal(acc.spec(theta_k), budget)
        if v_tilde <= consts.eps_pe:
            log.meta.update(stopped_at=k, cap_hit=False, v_tilde_final=v_tilde)
            return ExploreResult(pick, k, False, log, consts, data)
        if k >= max_episodes:
            log.meta.update(stopped_at=k, cap_hit=True, v_tilde_final=v_tilde)
            return ExploreResult(pick, k, True, log, consts, data)
        k += 1
        traj = sample_episode(theta_star, policy, rng)
        h, inst = _book.charge(policy)
        log.add(episode=k, phase="explore", model_index=pick, policy_hash=h,
                V_tilde_or_value=v_tilde, inst_regret=inst, cum_regret=_book.cum,
                survivors_count=len(cs.survivors),
                theta_star_survives=(truth in cs.survivors) if truth is not None else "",
                realized_reward=traj.total_reward)
        data.append(traj.iota, traj, h)
        for t in range(1, traj.H + 1):
            counts[(t, traj.prefix(t), traj.actions[t - 1])] += 1
        tracker.add(traj.iota, traj)


def explore_then_exploit(models: ModelClass, theta_star: LmdpPsi, K: int, delta: float, c: float,
                         rng: np.random.Generator, c_split: float = 4.0, c_beta: float = 1.0,
                         alpha: Optional[float] = None, budget: int = DEFAULT_BUDGET) -> RunLog:
    """Pure exploration at eps = c_split K^(-1/3), then the learned informed plan.

    Regret is measured against the informed optimum of ``theta_star``.
    """
    if K < 1:
        raise ConfigError("K must be at least 1")
    eps = c_split * K ** (-1.0 / 3.0)
    book = _RegretBook.informed(theta_star, budget)
    res = pure_explore(models, theta_star, eps, delta, c, rng, c_beta, max_episodes=K,
                       alpha=alpha, budget=budget, _book=book)
    log = res.log
    log.meta.update(algorithm="explore_then_exploit", K=K, c_split=c_split, eps=eps,
                    exploration_episodes=res.episodes, exploration_exhausted=res.cap_hit)
    exploit, _ = plan_informed_optimal(models[res.theta_hat_index], budget=budget)
    for k in range(res.episodes + 1, K + 1):
        traj = sample_episode(theta_star, exploit, rng)
        h, inst = book.charge(exploit)
        log.add(episode=k, phase="exploit", model_index=res.theta_hat_index, policy_hash=h,
                V_tilde_or_value=book.values[h], inst_regret=inst, cum_regret=book.cum,
                survivors_count="", theta_star_survives="",
                realized_reward=traj.total_reward)
    return log


def informed_gap_of_model(theta_hat: LmdpPsi, theta_star: LmdpPsi, budget: int = DEFAULT_BUDGET) -> float:
    """V* - V(pi*_{theta_hat}) on the true model, both informed."""
    v_star = value_of_policy(theta_star, plan_informed_optimal(theta_star, budget=budget)[0], budget)
    pol, _ = plan_informed_optimal(theta_hat, budget=budget)
    return v_star - value_of_policy(theta_star, pol, budget)
