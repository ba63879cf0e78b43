"""Predictive-state view of the two-context fixture.

Run: python3 demos/01_predictive_states.py
"""
import numpy as np

from lmdp_psi.env import enumerate_trajectories, trajectory_probability
from lmdp_psi.hardgen import effective_alpha_certificate
from lmdp_psi.harness import load_fixture
from lmdp_psi.policies import UniformPolicy
from lmdp_psi.psr import build_operators, conditioning_table, psr_probability, psr_state

theta = load_fixture("mixed-m2")
print(f"instance {theta.name}: M={theta.M} S={theta.S} A={theta.A} O={theta.O} I={theta.I} H={theta.H}")

# every trajectory probability through the operators agrees with the direct mixture
ops = build_operators(theta)
pol = UniformPolicy(theta.A)
err = max(abs(psr_probability(ops, pol, i, *tau) - trajectory_probability(theta, pol, i, *tau))
          for tau in enumerate_trajectories(theta) for i in range(theta.I))
print(f"largest operator-vs-direct discrepancy: {err:.2e}")

# the normalized predictive state after a short history
for prefix in [(), (0,), (0, 0, 1, 1)]:
    st = psr_state(ops, prefix)
    print(f"prefix {prefix!s:<14} mass {st.mass:.4f}  b_bar {np.round(st.b_bar, 4)}")

# measured conditioning against the bound implied by the certified separation
cert = effective_alpha_certificate(theta.emission)
rows = conditioning_table(theta, cert.value)
worst = max(r[4] / r[5] for r in rows)
print(f"alpha_eff {cert.value:.4f} (certified {cert.certified}); "
      f"{len(rows)} conditioning checks, worst measured/bound ratio {worst:.3f}")
