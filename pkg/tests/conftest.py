"""Shared instances and independent oracles for the test-suite."""
import itertools

import numpy as np
import pytest

from lmdp_psi.env import LmdpPsi, random_instance
from lmdp_psi.policies import StochasticPolicy, TablePolicy


def mdp_value_iteration(T, R, init, H):
    """Finite-horizon optimal value of one MDP: T (S,A,S), R (S,A), init (S,)."""
    V = np.zeros(T.shape[0])
    for _ in range(H):
        V = (R + T @ V).max(axis=1)
    return float(init @ V)


def bayes_posterior(theta, prefix):
    """Posterior over contexts after an iota-blind prefix, by explicit Bayes updates."""
    post = np.array(theta.mixing, dtype=float)
    post = post * theta.init_dist[:, prefix[0]]
    post /= post.sum()
    for i in range(1, len(prefix), 3):
        s, a, o, s2 = prefix[i - 1:i + 3]
        lik = theta.obs_kernel[:, s, a, o] * theta.transitions[:, s, a, s2]
        post = post * lik
        post /= post.sum()
    return post


def all_prefixes(theta):
    """Every history prefix (s_1, a_1, o_1, ..., s_t) with t <= H."""
    out = [(s,) for s in range(theta.S)]
    frontier = list(out)
    for _ in range(theta.H - 1):
        nxt = []
        for p in frontier:
            for a, o, s in itertools.product(range(theta.A), range(theta.O), range(theta.S)):
                nxt.append(p + (a, o, s))
        out += nxt
        frontier = nxt
    return out


def random_blind_policies(theta, rng, n):
    """Half deterministic tables, half stochastic tables over every prefix."""
    prefixes = all_prefixes(theta)
    pols = []
    for k in range(n):
        if k % 2 == 0:
            pols.append(TablePolicy({p: int(rng.integers(theta.A)) for p in prefixes}, theta.A))
        else:
            pols.append(StochasticPolicy({p: rng.dirichlet(np.ones(theta.A)) for p in prefixes}, theta.A))
    return pols


def vectorized_rollouts(theta, rule, n, rng):
    """Monte-Carlo episodes under a state-only rule, independent of ``sample_episode``.

    ``rule`` is either an integer table ``[t, s] -> a`` or action
    probabilities ``[t, s, a]``.  Returns (iota, states, actions, obs, total).
    """
    def pick(P):
        c = np.cumsum(P, axis=-1)
        u = rng.random(P.shape[0])[:, None] * c[:, -1:]
        return np.minimum((u >= c).sum(axis=1), P.shape[1] - 1)

    rule = np.asarray(rule)
    m = pick(np.broadcast_to(theta.mixing, (n, theta.M)))
    iota = pick(theta.emission[:, m].T)
    s = pick(theta.init_dist[m])
    total = np.zeros(n)
    states, actions, obs = [], [], []
    for t in range(theta.H):
        a = rule[t, s] if rule.ndim == 2 else pick(rule[t, s])
        o = pick(theta.obs_kernel[m, s, a])
        states.append(s)
        actions.append(a)
        obs.append(o)
        total += theta.reward[o]
        s = pick(theta.transitions[m, s, a])
    return iota, np.stack(states, 1), np.stack(actions, 1), np.stack(obs, 1), total


def identity_emission_instance(rng, M=2, S=2, A=2, O=2, H=2):
    base = random_instance(rng, M=M, S=S, A=A, O=O, I=M, H=H)
    return base.replace(emission=np.eye(M))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_instance():
    return random_instance(np.random.default_rng(7), M=2, S=2, A=2, O=2, I=3, H=2)


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion in the terminal summary
# ---------------------------------------------------------------------------

CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
