# Solve small instances to numerical stationarity and check two closed forms:
#  - M/M/2 with unit rates has E[Z] = 4/3,
#  - with nu = mu the death rate at level z is exactly mu*z, so the
#    stationary count is Poisson(r) no matter how many servers there are.

import numpy as np

from hwq import ClassParams, build_config
from hwq.exact import build_generator, enumerate_states, expectation, poisson_pmf, stationary
from hwq.policy import PREEMPTIVE

# --- M/M/2 ------------------------------------------------------------------
cfg = build_config([ClassParams(1.0, 1.0, 0.0)], r=1.0, a=1.0)  # N = 2
gen = build_generator(enumerate_states(cfg, PREEMPTIVE, K=60))
sv = stationary(gen)
ez = expectation(sv.pi, gen.idx.z.sum(axis=1))
print(f"M/M/2: E[Z] = {ez:.12f} (closed form 4/3 = {4/3:.12f})")
print(f"       solver residual = {sv.residual:.2e}, truncation deficit ~ {sv.deficit_estimate:.2e}")

# --- Poisson at nu = mu ------------------------------------------------------
r = 25.0
cfg = build_config([ClassParams(1.0, 1.0, 1.0)], r, a=1.0)
K = 85
gen = build_generator(enumerate_states(cfg, PREEMPTIVE, K))
sv = stationary(gen)
pois = poisson_pmf(r, np.arange(K + 1))
tv = 0.5 * (np.abs(sv.pi - pois).sum() + max(0.0, 1.0 - pois.sum()))
print(f"\nnu = mu, r = {r:g}: total variation vs Poisson({r:g}) = {tv:.2e}")

# --- GTH vs uniformized power iteration --------------------------------------
cfg = build_config([ClassParams(0.5, 1.0, 0.5), ClassParams(1.0, 2.0, 1.0)], 9.0, 1.0)
gen = build_generator(enumerate_states(cfg, PREEMPTIVE, 40))
pi_g = stationary(gen, method="gth").pi
sv_p = stationary(gen, method="power")
print(f"\n2-class r=9 ({gen.idx.n_states} states): "
      f"GTH vs power iteration TV = {0.5 * np.abs(pi_g - sv_p.pi).sum():.2e} "
      f"({sv_p.iterations} iterations)")
