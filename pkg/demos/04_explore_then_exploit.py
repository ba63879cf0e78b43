"""Bonus-driven exploration, then the informed plan of the learned model.

Run: python3 demos/04_explore_then_exploit.py [K]
"""
import sys

import numpy as np

from lmdp_psi.harness import load_fixture, load_fixture_class
from lmdp_psi.learning import explore_then_exploit, informed_gap_of_model, pure_explore

K = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
theta, models = load_fixture("mixed-m2"), load_fixture_class("mixed-m2")

res = pure_explore(models, theta, eps=0.1, delta=0.1, c=0.01, rng=np.random.default_rng(0))
k = res.constants
print(f"regularizer {k.lambda0_theory:.1f} -> {k.lambda0:.2f}, threshold {k.eps_pe_theory:.2e} -> {k.eps_pe:.3f}")
print(f"exploration stopped after {res.episodes} episodes (cap hit: {res.cap_hit}); "
      f"learned model '{models[res.theta_hat_index].name}'")
print(f"informed gap of its plan on the truth: {informed_gap_of_model(models[res.theta_hat_index], theta):.4f}")

log = explore_then_exploit(models, theta, K, 0.1, 0.01, np.random.default_rng(0))
print(f"K={K}: {log.meta['exploration_episodes']} exploration episodes, "
      f"final cumulative regret {log.cum_regret[-1]:.2f}")
