"""Predictive-state reparameterization of an LMDP-Psi for blind policies.

Operators act on vectors indexed by side-information symbols:

    B(o, s' | s, a) = E diag_m[P(o, s' | m, s, a)] E^+        (E = emission)
    b0              = E p

The folded t=0 transition is the operator ``B_init(s_1)`` built the same way
from ``init_dist``, and the final step marginalizes the next state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .env import LmdpPsi, policy_probability
from .errors import RankError, SizeError
from .policies import Prefix

NEG_CLAMP = 1e-12
ZERO_MASS = 1e-300
RANK_TOL = 1e-10


def left_inverse(emission: np.ndarray) -> np.ndarray:
    """Moore-Penrose left inverse; raises RankError on rank deficiency."""
    E = np.asarray(emission, dtype=float)
    sv = np.linalg.svd(E, compute_uv=False)
    if sv.size < E.shape[1] or sv.min() <= RANK_TOL * max(sv.max(), 1.0):
        raise RankError(f"emission matrix is rank deficient; singular values {sv.tolist()}",
                        singular_values=sv)
    return np.linalg.pinv(E)


def l1_left_inverse(emission: np.ndarray) -> np.ndarray:
    """Left inverse minimizing the induced l1 norm (largest column l1 norm).

    One LP over G (M x I): min t  s.t.  G E = I_M,  sum_m |G[m, j]| <= t.
    """
    E = np.asarray(emission, dtype=float)
    left_inverse(E)  # rank check
    I, M = E.shape
    n = M * I
    # variables: g (n), u (n), t (1); g index m*I + j
    c = np.zeros(2 * n + 1)
    c[-1] = 1.0
    A_ub, b_ub = [], []
    eye = np.eye(n)
    A_ub.append(np.hstack([eye, -eye, np.zeros((n, 1))]))
    A_ub.append(np.hstack([-eye, -eye, np.zeros((n, 1))]))
    b_ub += [np.zeros(n), np.zeros(n)]
    col = np.zeros((I, 2 * n + 1))
    for j in range(I):
        for m in range(M):
            col[j, n + m * I + j] = 1.0
        col[j, -1] = -1.0
    A_ub.append(col)
    b_ub.append(np.zeros(I))
    A_eq = np.zeros((M * M, 2 * n + 1))
    b_eq = np.eye(M).ravel()
    for m in range(M):
        for m2 in range(M):
            A_eq[m * M + m2, m * I:(m + 1) * I] = E[:, m2]
    bounds = [(None, None)] * n + [(0, None)] * n + [(0, None)]
    res = linprog(c, A_ub=np.vstack(A_ub), b_ub=np.concatenate(b_ub), A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"l1 left-inverse LP failed: {res.message}")
    G = res.x[:n].reshape(M, I)
    # polish the equality constraint: G <- G + (I - G E) E^+ keeps G E = I exactly-ish
    G = G + (np.eye(M) - G @ E) @ np.linalg.pinv(E)
    return G


@dataclass(frozen=True, eq=False)
class PsrOperators:
    theta: LmdpPsi
    left_inv: np.ndarray
    b0: np.ndarray

    @property
    def emission(self) -> np.ndarray:
        return self.theta.emission

    def _wrap(self, diag: np.ndarray) -> np.ndarray:
        return self.emission @ (diag[:, None] * self.left_inv)

    def operator(self, s: int, a: int, o: int, s_next: Optional[int] = None) -> np.ndarray:
        """Dense B(o, s'|s, a); ``s_next=None`` marginalizes the next state."""
        th = self.theta
        p = th.obs_kernel[:, s, a, o].copy()
        if s_next is not None:
            p *= th.transitions[:, s, a, s_next]
        return self._wrap(p)

    def init_operator(self, s1: int) -> np.ndarray:
        return self._wrap(self.theta.init_dist[:, s1])

    def apply(self, b: np.ndarray, s: int, a: int, o: int, s_next: Optional[int] = None) -> np.ndarray:
        th = self.theta
        p = th.obs_kernel[:, s, a, o].copy()
        if s_next is not None:
            p *= th.transitions[:, s, a, s_next]
        return self.emission @ (p * (self.left_inv @ b))

    def apply_init(self, b: np.ndarray, s1: int) -> np.ndarray:
        return self.emission @ (self.theta.init_dist[:, s1] * (self.left_inv @ b))


def build_operators(theta: LmdpPsi, left_inv: Optional[np.ndarray] = None) -> PsrOperators:
    if left_inv is None:
        left_inv = left_inverse(theta.emission)
    else:
        left_inv = np.asarray(left_inv, dtype=float)
        err = np.abs(left_inv @ theta.emission - np.eye(theta.M)).max()
        if err > 1e-10:
            raise RankError(f"supplied matrix is not a left inverse (error {err:.3g})")
    b0 = theta.emission @ theta.mixing
    return PsrOperators(theta, left_inv, b0)


def psr_joint(ops: PsrOperators, states, actions, observations) -> np.ndarray:
    """(prod B) b0 for a full trajectory: the policy-free joint law over iota."""
    H = len(states)
    v = ops.init_operator(states[0]) @ ops.b0
    for t in range(H):
        s_next = states[t + 1] if t < H - 1 else None
        v = ops.operator(states[t], actions[t], observations[t], s_next) @ v
    return v


def psr_probability(ops: PsrOperators, policy, iota: int, states, actions, observations) -> float:
    """e_iota^T (prod B) b0 * pi(tau), multiplying dense operators in order."""
    v = psr_joint(ops, states, actions, observations)
    return float(v[iota]) * policy_probability(policy, iota, states, actions, observations)


@dataclass(frozen=True, eq=False)
class PsrState:
    b: np.ndarray
    b_bar: Optional[np.ndarray]
    t: int
    zero_mass: bool

    @property
    def mass(self) -> float:
        return float(self.b.sum())


def psr_state(ops: PsrOperators, prefix: Prefix) -> PsrState:
    """Predictive state of an iota-blind history prefix ``(s1, a1, o1, ..., s_t)``.

    The empty prefix returns ``b0`` (t = 0).
    """
    if len(prefix) == 0:
        b = ops.b0.copy()
        t = 0
    else:
        if (len(prefix) - 1) % 3:
            raise ValueError(f"malformed prefix {prefix!r}")
        b = ops.apply_init(ops.b0, prefix[0])
        for i in range(1, len(prefix), 3):
            s, a, o, s2 = prefix[i - 1], prefix[i], prefix[i + 1], prefix[i + 2]
            b = ops.apply(b, s, a, o, s2)
        t = (len(prefix) - 1) // 3 + 1
        if t > ops.theta.H:
            raise ValueError("prefix longer than the horizon")
    b = np.where((b < 0) & (b >= -NEG_CLAMP), 0.0, b)
    norm = float(np.abs(b).sum())
    if norm <= ZERO_MASS:
        return PsrState(b, None, t, True)
    return PsrState(b, b / norm, t, False)


def belief_embedding(theta: LmdpPsi, weights: np.ndarray) -> np.ndarray:
    """Normalized predictive state from per-context prefix weights: E w / |w|_1."""
    w = np.asarray(weights, dtype=float)
    return theta.emission @ (w / w.sum())


# ---------------------------------------------------------------------------
# well-conditioning
# ---------------------------------------------------------------------------

def _future_nodes(theta: LmdpPsi, t: int) -> int:
    branch = theta.O * theta.S * theta.A
    return sum(branch ** k for k in range(theta.H - t + 1))


class _FutureScorer:
    """max over deterministic continuations of sum_{omega} |rows . v(omega)|.

    ``v(omega)`` is the signed per-context vector ``c_m P(omega | m, x_t)``;
    leaves score ``sum_{iota in rows} |E[iota] . v|``.
    """

    def __init__(self, theta: LmdpPsi, rows: np.ndarray):
        self.theta = theta
        self.rows = rows
        self.memo = {}

    def score(self, t: int, s: int, a: int, v: np.ndarray) -> float:
        scale = float(np.abs(v).sum())
        if scale == 0.0:
            return 0.0
        u = v / scale
        key = (t, s, a, tuple(np.round(u, 12)))
        hit = self.memo.get(key)
        if hit is None:
            hit = self._score(t, s, a, u)
            self.memo[key] = hit
        return scale * hit

    def _score(self, t: int, s: int, a: int, v: np.ndarray) -> float:
        th = self.theta
        total = 0.0
        for o in range(th.O):
            vo = v * th.obs_kernel[:, s, a, o]
            if not vo.any():
                continue
            if t == th.H:
                total += float(np.abs(self.rows @ vo).sum())
                continue
            for s2 in range(th.S):
                v2 = vo * th.transitions[:, s, a, s2]
                if not v2.any():
                    continue
                total += max(self.score(t + 1, s2, a2, v2) for a2 in range(th.A))
        return total


def _conditioning(theta: LmdpPsi, rows: np.ndarray, t: int, x, left_inv, budget) -> float:
    if not 1 <= t <= theta.H:
        raise ValueError(f"t={t} outside 1..{theta.H}")
    nodes = _future_nodes(theta, t) * theta.I
    if nodes > budget:
        raise SizeError(f"future tree of {nodes} nodes exceeds budget {budget}", nodes, budget)
    if left_inv is None:
        left_inv = l1_left_inverse(theta.emission)
    s, a = x
    scorer = _FutureScorer(theta, rows)
    # |psi^T b| is convex in b: the max over the l1 sphere sits at a vertex +-e_j
    return max(scorer.score(t, s, a, left_inv[:, j].copy()) for j in range(theta.I))


def conditioning_constant(theta: LmdpPsi, t: int, x, left_inv: Optional[np.ndarray] = None,
                          budget: int = 10**6) -> float:
    """max_{|b|_1=1} max_{pi blind} sum_{iota, omega_t} pi(omega_t) |psi(omega_t, iota | x_t)^T b|."""
    return _conditioning(theta, theta.emission, t, x, left_inv, budget)


def conditional_conditioning(theta: LmdpPsi, iota: int, t: int, x,
                             left_inv: Optional[np.ndarray] = None, budget: int = 10**6) -> float:
    """Same functional with the side-information symbol held fixed."""
    return _conditioning(theta, theta.emission[[iota]], t, x, left_inv, budget)


def conditioning_bound(theta: LmdpPsi, alpha_eff: float) -> float:
    """M / alpha_eff; a single context has no belief pairs, and futures are sub-probabilities."""
    if theta.M == 1:
        return 1.0
    return theta.M / alpha_eff


def conditional_conditioning_bound(theta: LmdpPsi, iota: int, alpha_eff: float) -> float:
    return conditioning_bound(theta, alpha_eff) * float(theta.emission[iota].max())


def conditioning_table(theta: LmdpPsi, alpha_eff: float, iotas: Optional[Sequence[int]] = None,
                       left_inv: Optional[np.ndarray] = None):
    """Rows (t, s, a, iota, measured, bound, pass) for every (t, x, iota)."""
    if left_inv is None:
        left_inv = l1_left_inverse(theta.emission)
    iotas = range(theta.I) if iotas is None else iotas
    rows = []
    for t in range(1, theta.H + 1):
        for s in range(theta.S):
            for a in range(theta.A):
                for iota in iotas:
                    val = conditional_conditioning(theta, iota, t, (s, a), left_inv)
                    bound = conditional_conditioning_bound(theta, iota, alpha_eff)
                    rows.append((t, s, a, iota, val, bound, val <= bound + 1e-9))
    return rows
