"""Optimistic maximum likelihood over a finite model class.

Run: python3 demos/03_optimistic_mle.py [K]
"""
import sys

import numpy as np

from lmdp_psi.harness import load_fixture, load_fixture_class, regret_slope
from lmdp_psi.learning import omle_regret_min

K = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
theta, models = load_fixture("mixed-m2"), load_fixture_class("mixed-m2")
names = [m.name for m in models]
log = omle_regret_min(models, theta, K, 0.1, np.random.default_rng(0))

print(f"{len(models)} candidate models, truth is '{names[models.truth_index]}'")
for k in (1, 10, 100, K):
    row = log.rows[k - 1]
    print(f"episode {k:>5}: playing plan of '{names[row['model_index']]}', "
          f"{row['survivors_count']} survivors, cumulative regret {row['cum_regret']:.2f}")
print(f"share of episodes whose plan is optimal on the truth: "
      f"{np.mean(log.column('inst_regret') <= 1e-12):.2%}")
print(f"log-log slope of cumulative regret over [200, {K}]: {regret_slope(log.cum_regret, 200, K):.3f}")
