"""Lower-bound instance family, emission certification and exact KL oracles.

Layout of a hard instance with ``M`` contexts (``d = M // 4``):

* contexts ``0..d-1`` form the learning group, ``d..2d-1`` the confusing
  reference group, ``2d..M-1`` the almost-observable group;
* states: ``s_init``, ``s_ter`` (absorbing, reward 0), ``s_pay`` (pays a
  Ber(1/8) reward then absorbs), hard chain ``1..d``, reference chain ``1..d``;
* actions: explore actions, one exploit action per observable context, then
  control actions;
* observations ``0``/``1`` decode to rewards 0/1;
* side information: ``M`` groups of ``alphabet`` symbols, then ``iota_hard``.

Decision step 1 is taken at ``s_init`` and steps ``2..d+1`` walk the chains,
so ``H = d + 1``.  A chain exit before the last chain step moves to ``s_pay``
whose Bernoulli reward is observed one step later.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .env import LmdpPsi, validate_model
from .errors import ConfigError, SizeError

TERMINAL_REWARD_P = 1.0 / 8.0
RATIONAL_DENOMINATOR = 10**9
S_INIT, S_TER, S_PAY = 0, 1, 2


# ---------------------------------------------------------------------------
# effective alpha
# ---------------------------------------------------------------------------

@dataclass
class AlphaCertificate:
    value: float
    certified: bool
    witness: Optional[np.ndarray]
    num_programs: int = 0


def _sign_patterns(M: int):
    # x and -x give the same norm, so fix the first sign to +1
    for tail in itertools.product((1.0, -1.0), repeat=M - 1):
        sigma = np.array((1.0,) + tail)
        if np.all(sigma > 0):
            continue
        yield sigma


def effective_alpha_certificate(emission: np.ndarray, max_exact_m: int = 12,
                                num_samples: int = 200_000,
                                rng: Optional[np.random.Generator] = None) -> AlphaCertificate:
    """min |E x|_1 over zero-sum x with |x|_1 = 1.

    Exact for ``M <= max_exact_m``: one LP per orthant of x.  Larger ``M``
    returns an uncertified upper estimate from random zero-sum directions.
    """
    E = np.asarray(emission, dtype=float)
    I, M = E.shape
    if M == 1:
        return AlphaCertificate(math.inf, True, None)
    if M > max_exact_m:
        rng = np.random.default_rng(0) if rng is None else rng
        x = _random_zero_sum(rng, num_samples, M)
        vals = np.abs(x @ E.T).sum(axis=1)
        k = int(np.argmin(vals))
        return AlphaCertificate(float(vals[k]), False, x[k], 0)
    # variables [x (M), u (I)]
    c = np.concatenate([np.zeros(M), np.ones(I)])
    A_ub_base = np.vstack([np.hstack([E, -np.eye(I)]), np.hstack([-E, -np.eye(I)])])
    b_ub = np.zeros(2 * I)
    best, witness, count = math.inf, None, 0
    for sigma in _sign_patterns(M):
        A_eq = np.vstack([np.concatenate([sigma, np.zeros(I)]),
                          np.concatenate([np.ones(M), np.zeros(I)])])
        bounds = [(0, None) if sg > 0 else (None, 0) for sg in sigma] + [(0, None)] * I
        res = linprog(c, A_ub=A_ub_base, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0, 0.0],
                      bounds=bounds, method="highs")
        count += 1
        if res.status == 0 and res.fun < best:
            best = float(res.fun)
            witness = res.x[:M].copy()
    return AlphaCertificate(best, True, witness, count)


def effective_alpha(emission: np.ndarray) -> float:
    """Best constant alpha with d_TV(P(.|v1), P(.|v2)) >= alpha/2 |v1 - v2|_1."""
    return effective_alpha_certificate(emission).value


def _random_zero_sum(rng: np.random.Generator, n: int, M: int) -> np.ndarray:
    x = rng.standard_normal((n, M))
    # mix in sparse two-point directions, where minima of |E x|_1 often sit
    k = n // 4
    if k and M > 1:
        i = rng.integers(0, M, size=k)
        j = (i + rng.integers(1, M, size=k)) % M
        x[:k] = 0.0
        x[np.arange(k), i] = 1.0
        x[np.arange(k), j] = -rng.random(k)
    x -= x.mean(axis=1, keepdims=True)
    return x / np.abs(x).sum(axis=1, keepdims=True)


def sampled_alpha_upper_bound(emission: np.ndarray, num_samples: int,
                              rng: np.random.Generator, chunk: int = 100_000) -> float:
    """Minimum of |E x|_1 over random unit-l1 zero-sum directions."""
    E = np.asarray(emission, dtype=float)
    best = math.inf
    done = 0
    while done < num_samples:
        n = min(chunk, num_samples - done)
        x = rng.standard_normal((n, E.shape[1]))
        x -= x.mean(axis=1, keepdims=True)
        x /= np.abs(x).sum(axis=1, keepdims=True)
        best = min(best, float(np.abs(x @ E.T).sum(axis=1).min()))
        done += n
    return best


# ---------------------------------------------------------------------------
# hard instance family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HardInstanceSpec:
    M: int = 8
    alpha: float = 0.003
    eps: float = 0.1
    alphabet: int = 64
    n_explore: int = 2
    n_control: int = 2
    a_star: Optional[Tuple[int, ...]] = None
    a_explore_star: int = 0

    def __post_init__(self):
        if self.a_star is None:
            object.__setattr__(self, "a_star", (0,) * self.d)
        else:
            object.__setattr__(self, "a_star", tuple(int(a) for a in self.a_star))
        self.validate()

    @property
    def d(self) -> int:
        return self.M // 4

    @property
    def horizon(self) -> int:
        return self.d + 1

    @property
    def in_theorem_regime(self) -> bool:
        """True when alpha < 1 / (256 sqrt(M)); the constructors do not require it."""
        return self.alpha < 1.0 / (256.0 * math.sqrt(self.M))

    @property
    def alpha_threshold(self) -> float:
        """Separation an accepted emission must certify: alpha / (128 sqrt(M))."""
        return self.alpha / (128.0 * math.sqrt(self.M))

    def validate(self) -> None:
        if self.M < 8 or self.M % 4:
            raise ConfigError(f"M must be a multiple of 4 and at least 8, got {self.M}")
        if not 0.0 < self.eps < 0.25:
            raise ConfigError(f"eps must lie in (0, 1/4), got {self.eps}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.alphabet < 1 or self.n_explore < 1 or self.n_control < 2:
            raise ConfigError("alphabet >= 1, n_explore >= 1 and n_control >= 2 are required")
        if len(self.a_star) != self.d or any(not 0 <= a < self.n_control for a in self.a_star):
            raise ConfigError(f"a_star must be {self.d} control indices below {self.n_control}")
        if not 0 <= self.a_explore_star < self.n_explore:
            raise ConfigError("a_explore_star out of range")

    def with_(self, **kw) -> "HardInstanceSpec":
        d = dict(M=self.M, alpha=self.alpha, eps=self.eps, alphabet=self.alphabet,
                 n_explore=self.n_explore, n_control=self.n_control, a_star=self.a_star,
                 a_explore_star=self.a_explore_star)
        d.update(kw)
        return HardInstanceSpec(**d)


@dataclass(frozen=True)
class HardLayout:
    """Index bookkeeping for states, actions and side-information symbols."""
    spec: HardInstanceSpec

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def num_states(self) -> int:
        return 3 + 2 * self.d

    def hard(self, t: int) -> int:
        return 3 + t - 1

    def ref(self, t: int) -> int:
        return 3 + self.d + t - 1

    @property
    def num_actions(self) -> int:
        return self.spec.n_explore + self.spec.M // 2 + self.spec.n_control

    def explore(self, i: int) -> int:
        return i

    def exploit(self, m: int) -> int:
        """Exploit action of observable context ``m`` (0-based, ``m >= M/2``)."""
        return self.spec.n_explore + (m - self.spec.M // 2)

    def control(self, j: int) -> int:
        return self.spec.n_explore + self.spec.M // 2 + j

    @property
    def control_actions(self) -> range:
        return range(self.control(0), self.control(0) + self.spec.n_control)

    @property
    def explore_actions(self) -> range:
        return range(0, self.spec.n_explore)

    @property
    def num_side_info(self) -> int:
        return self.spec.M * self.spec.alphabet + 1

    @property
    def iota_hard(self) -> int:
        return self.spec.M * self.spec.alphabet

    def group(self, g: int) -> range:
        """Symbols of group ``g`` (1-based, 1..M)."""
        L = self.spec.alphabet
        return range((g - 1) * L, g * L)

    def group_of(self, iota: int) -> int:
        return self.spec.M + 1 if iota == self.iota_hard else iota // self.spec.alphabet + 1

    @property
    def a_star_actions(self) -> Tuple[int, ...]:
        return tuple(self.control(a) for a in self.spec.a_star)

    @property
    def a_explore_star(self) -> int:
        return self.explore(self.spec.a_explore_star)


@dataclass
class EmissionAssignment:
    signs: np.ndarray            # shape ((M/2) * alphabet, M/2), entries +-1
    alpha_eff: float = float("nan")
    resamples: int = 0
    certified: bool = False
    witness: Optional[np.ndarray] = field(default=None, repr=False)


def emission_matrix(spec: HardInstanceSpec, signs: np.ndarray) -> np.ndarray:
    M, L = spec.M, spec.alphabet
    half = M // 2
    lay = HardLayout(spec)
    signs = np.asarray(signs, dtype=float)
    if signs.shape != (half * L, half) or not np.all(np.abs(signs) == 1.0):
        raise ConfigError(f"signs must be a +-1 array of shape {(half * L, half)}")
    E = np.zeros((lay.num_side_info, M))
    E[lay.iota_hard, :half] = 0.5
    weights = 1.0 + spec.alpha * signs                  # rows: first M/2 groups
    E[: half * L, :half] = 0.5 * weights / weights.sum(axis=0, keepdims=True)
    for m in range(half, M):
        g = m + 1                                       # 1-based context index
        for grp in (g - half, g):
            E[list(lay.group(grp)), m] = 1.0 / (2 * L)
    return E


def _build(spec: HardInstanceSpec, assignment: EmissionAssignment, reference: bool) -> LmdpPsi:
    lay = HardLayout(spec)
    M, d, eps = spec.M, spec.d, spec.eps
    S, A = lay.num_states, lay.num_actions
    T = np.zeros((M, S, A, S))
    T[:, :, :, S_TER] = 1.0
    R1 = np.zeros((M, S, A))                            # P(reward symbol 1)
    learn, refg = range(0, d), range(d, 2 * d)

    def go(m, s, a, dist):
        T[m, s, a, :] = 0.0
        for s2, p in dist.items():
            T[m, s, a, s2] += p

    # s_pay: Bernoulli payout, then absorb
    R1[:, S_PAY, :] = TERMINAL_REWARD_P
    # s_init
    for e in lay.explore_actions:
        true_explore = (e == lay.a_explore_star) and not reference
        for m in learn:
            go(m, S_INIT, e, {lay.hard(1): eps, lay.ref(1): 1 - eps} if true_explore else {lay.ref(1): 1.0})
        for m in refg:
            go(m, S_INIT, e, {lay.hard(1): 1 - eps, lay.ref(1): eps} if true_explore else {lay.hard(1): 1.0})
    for m in range(2 * d, M):
        R1[m, S_INIT, lay.exploit(m)] = 1.0
    # chains
    for t in range(1, d + 1):
        for j, a in enumerate(lay.control_actions):
            for m in range(M):
                for chain in (lay.ref, lay.hard):
                    s = chain(t)
                    if t < d:
                        p_exit = 1.0 / (d + 1 - t)
                        go(m, s, a, {chain(t + 1): 1 - p_exit, S_PAY: p_exit})
                    else:
                        R1[m, s, a] = TERMINAL_REWARD_P
            if reference:
                continue
            a_opt = j == spec.a_star[t - 1]
            for m in learn:
                i = m + 1                               # 1-based position in the group
                s = lay.hard(t)
                if t < d:
                    if i == 1 or i > d - t + 1:
                        leave = not a_opt
                    elif i == d - t + 1:
                        leave = a_opt
                    else:
                        leave = False
                    go(m, s, a, {S_PAY: 1.0} if leave else {lay.hard(t + 1): 1.0})
                elif i == 1 and a_opt:
                    R1[m, s, a] = 1.0
    O = np.stack([1.0 - R1, R1], axis=-1)
    init = np.zeros((M, S))
    init[:, S_INIT] = 1.0
    return LmdpPsi(
        mixing=np.full(M, 1.0 / M),
        init_dist=init,
        transitions=T,
        obs_kernel=O,
        emission=emission_matrix(spec, assignment.signs),
        reward=np.array([0.0, 1.0]),
        horizon=spec.horizon,
        name="hard-reference" if reference else "hard",
    )


def build_hard_instance(spec: HardInstanceSpec, assignment: EmissionAssignment) -> LmdpPsi:
    theta = _build(spec, assignment, reference=False)
    report = validate_model(theta)
    if not report.ok:
        raise ConfigError("hard instance failed validation: " + "; ".join(report.issues()))
    return theta


def build_reference(spec: HardInstanceSpec, assignment: EmissionAssignment) -> LmdpPsi:
    theta = _build(spec, assignment, reference=True)
    report = validate_model(theta)
    if not report.ok:
        raise ConfigError("reference instance failed validation: " + "; ".join(report.issues()))
    return theta


def sample_emission_assignment(spec: HardInstanceSpec, rng: np.random.Generator,
                               max_resamples: int = 10) -> EmissionAssignment:
    """I.i.d. uniform signs, redrawn until the certified alpha_eff clears alpha/(128 sqrt M)."""
    half = spec.M // 2
    for k in range(1, max_resamples + 1):
        signs = rng.choice(np.array([-1.0, 1.0]), size=(half * spec.alphabet, half))
        cert = effective_alpha_certificate(emission_matrix(spec, signs))
        if cert.value >= spec.alpha_threshold:
            return EmissionAssignment(signs, cert.value, k, cert.certified, cert.witness)
    raise ConfigError(
        f"no emission assignment reached alpha_eff >= {spec.alpha_threshold:.3g} within "
        f"{max_resamples} draws; increase the per-group alphabet (currently {spec.alphabet})")


def verify_assignment(spec: HardInstanceSpec, signs: np.ndarray) -> EmissionAssignment:
    """Certify a given sign table; ``certified`` is False when the threshold is missed."""
    cert = effective_alpha_certificate(emission_matrix(spec, signs))
    ok = cert.certified and cert.value >= spec.alpha_threshold
    return EmissionAssignment(np.asarray(signs, dtype=float), cert.value, 0, ok, cert.witness)


# ---------------------------------------------------------------------------
# exact KL oracles
# ---------------------------------------------------------------------------

def _rational(x: float) -> Fraction:
    return Fraction(float(x)).limit_denominator(RATIONAL_DENOMINATOR)


def open_loop_distribution(theta: LmdpPsi, iota: int, actions: Sequence[int],
                           exact: bool = False) -> Dict[tuple, float]:
    """P((s_1..s_H, o_1..o_H) | iota, a_1..a_H) for an open-loop action sequence.

    With ``exact=True`` every model entry is read as the nearest small-denominator
    rational and the law is accumulated in exact arithmetic, so two models whose
    laws agree structurally produce identical dictionaries.
    """
    if len(actions) != theta.H:
        raise ConfigError(f"need {theta.H} actions, got {len(actions)}")
    M = theta.M
    conv = _rational if exact else float
    post = [conv(theta.mixing[m]) * conv(theta.emission[iota, m]) for m in range(M)]
    total = sum(post)
    if total == 0:
        raise ConfigError(f"side information {iota} has zero probability")
    post = [p / total for p in post]
    out: Dict[tuple, object] = {}

    def rec(t, s, w, states, obs):
        a = actions[t]
        for o in range(theta.O):
            wo = [w[m] * conv(theta.obs_kernel[m, s, a, o]) if w[m] else 0 for m in range(M)]
            if not any(wo):
                continue
            if t == theta.H - 1:
                key = (states + (s,), obs + (o,))
                out[key] = out.get(key, 0) + sum(wo)
                continue
            for s2 in range(theta.S):
                w2 = [wo[m] * conv(theta.transitions[m, s, a, s2]) if wo[m] else 0 for m in range(M)]
                if any(w2):
                    rec(t + 1, s2, w2, states + (s,), obs + (o,))

    for s1 in range(theta.S):
        w = [post[m] * conv(theta.init_dist[m, s1]) if post[m] else 0 for m in range(M)]
        if any(w):
            rec(0, s1, w, (), ())
    return out


def kl_divergence(p: Dict[tuple, float], q: Dict[tuple, float]) -> float:
    total = 0.0
    for k, pk in p.items():
        if pk <= 0.0:
            continue
        qk = q.get(k, 0.0)
        if qk <= 0.0:
            return math.inf
        if pk != qk:
            total += float(pk) * math.log(float(pk / qk))
    return max(total, 0.0)


def _check_pair(theta0: LmdpPsi, theta: LmdpPsi) -> None:
    if not theta0.same_spaces(theta):
        raise ConfigError("models do not share spaces")


def conditional_kl(theta0: LmdpPsi, theta: LmdpPsi, iota: int, a0: int, a_seq: Sequence[int]) -> float:
    """KL(P_theta0(. | iota, a0, a_1:d) || P_theta(. | iota, a0, a_1:d))."""
    _check_pair(theta0, theta)
    actions = (int(a0),) + tuple(int(a) for a in a_seq)
    return kl_divergence(open_loop_distribution(theta0, iota, actions, exact=True),
                         open_loop_distribution(theta, iota, actions, exact=True))


Strategy = Callable[[tuple, int], Tuple[int, ...]]


def switching_strategy(first: Sequence[int], after_reward: Sequence[int],
                       after_no_reward: Sequence[int]) -> Strategy:
    """Open-loop action tuple per episode, switched on the previous episode's total reward."""
    first, yes, no = tuple(first), tuple(after_reward), tuple(after_no_reward)

    def strategy(past, iota):
        if not past:
            return first
        _, _, (_, obs) = past[-1]
        return yes if sum(obs) > 0 else no

    return strategy


def kl_chain_identity_check(theta0: LmdpPsi, theta: LmdpPsi, strategy: Strategy, K: int,
                            explore_action: int, budget: int = 10**7, tol: float = 1e-9):
    """Both sides of the information-count identity by exhaustive enumeration.

    lhs = sum over tests (iota, explore_action, a_1:d) of E_theta0[N_test] * KL(test)
    rhs = KL of the joint K-episode outcome laws under ``strategy``.
    Side information has the same law in both models, so it drops out of rhs.
    """
    _check_pair(theta0, theta)
    if not np.allclose(theta0.side_info_marginal(), theta.side_info_marginal(), atol=0, rtol=0):
        raise ConfigError("models disagree on the side-information law")
    p_iota = theta0.side_info_marginal()
    iotas = [i for i in range(theta0.I) if p_iota[i] > 0]
    cache: Dict[tuple, Tuple[dict, dict]] = {}
    counts: Dict[tuple, float] = {}
    visited = [0]

    def dists(iota, actions):
        key = (iota, actions)
        if key not in cache:
            cache[key] = (open_loop_distribution(theta0, iota, actions, exact=True),
                          open_loop_distribution(theta, iota, actions, exact=True))
        return cache[key]

    def rec(k, past, prob):
        if k == K:
            return 0.0
        total = 0.0
        for iota in iotas:
            actions = tuple(strategy(past, iota))
            p0, p1 = dists(iota, actions)
            w = prob * p_iota[iota]
            counts[(iota, actions)] = counts.get((iota, actions), 0.0) + w
            for outcome, q0 in p0.items():
                visited[0] += 1
                if visited[0] > budget:
                    raise SizeError(f"more than {budget} outcome sequences", visited[0], budget)
                q1 = p1.get(outcome, 0.0)
                if q1 == 0.0:
                    return math.inf
                step = 0.0 if q0 == q1 else math.log(float(q0 / q1))
                q0f = float(q0)
                total += p_iota[iota] * q0f * (step + rec(k + 1, past + ((iota, actions, outcome),), w * q0f))
        return total

    rhs = rec(0, (), 1.0)
    lhs = 0.0
    for (iota, actions), n in counts.items():
        if actions[0] != explore_action:
            continue
        p0, p1 = dists(iota, actions)
        lhs += n * kl_divergence(p0, p1)
    if abs(lhs - rhs) > tol:
        raise AssertionError(f"information identity violated: lhs={lhs!r} rhs={rhs!r}")
    return lhs, rhs


def kl_scaling_report(spec: HardInstanceSpec, assignment: EmissionAssignment,
                      eps_values: Sequence[float] = (0.02, 0.04, 0.08),
                      ratio_range: Tuple[float, float] = (3.0, 5.3)):
    """Rows (iota_class, a_class, eps, alpha, kl, predicted_scaling_pass).

    ``predicted_scaling_pass`` compares each kl with the one at the previous
    (halved) eps or alpha; the first row of each series has no predecessor.
    """
    lay = HardLayout(spec)
    a0 = lay.a_explore_star
    opt = lay.a_star_actions
    sub = tuple(lay.control((spec.a_star[0] + 1) % spec.n_control) if t == 0 else c
                for t, c in enumerate(opt))
    iota_other = lay.group(1)[0]
    rows = []

    def kl_at(sp, iota, seq):
        th0 = build_reference(sp, assignment)
        th = build_hard_instance(sp, assignment)
        return conditional_kl(th0, th, iota, a0, seq)

    series = [
        ("iota_hard", "suboptimal", "eps", lay.iota_hard, sub),
        ("iota_hard", "optimal", "eps", lay.iota_hard, opt),
        ("iota_other", "optimal", "eps", iota_other, opt),
        ("iota_other", "suboptimal", "eps", iota_other, sub),
    ]
    for ic, ac, _, iota, seq in series:
        prev = None
        for e in sorted(eps_values):
            kl = kl_at(spec.with_(eps=e), iota, seq)
            if ac == "suboptimal" and ic == "iota_hard":
                ok = kl == 0.0
            elif prev is None:
                ok = None
            else:
                ok = prev > 0 and ratio_range[0] <= kl / prev <= ratio_range[1]
            rows.append((ic, ac, e, spec.alpha, kl, ok))
            prev = kl
    prev = None
    for a in sorted((spec.alpha / 4, spec.alpha / 2, spec.alpha)):
        kl = kl_at(spec.with_(alpha=a), iota_other, sub)
        ok = None if prev is None else (prev > 0 and ratio_range[0] <= kl / prev <= ratio_range[1])
        rows.append(("iota_other", "suboptimal", spec.eps, a, kl, ok))
        prev = kl
    return rows
