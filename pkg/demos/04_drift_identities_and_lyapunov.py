# Per-state drift identities, scanned exhaustively over truncated state spaces.
#
# The scaled workload phi_hat = sum_i (z_i - rho_i r)/(mu_i sqrt(r)) satisfies
#
#   (Abar phi_hat)(x) = -min(z_hat, a_eff) - sum_i (nu_i/mu_i) q_hat_i
#
# exactly at every state: each departure moves phi_hat by 1/(mu_i sqrt(r)).
# From this follow the exponential Lyapunov bound (nu = 0) and the two-sided
# abandonment bounds, both checked below with zero tolerance for violations.

from hwq import ClassParams, build_config
from hwq.exact import build_generator, enumerate_states
from hwq.policy import NONPREEMPTIVE, PREEMPTIVE
from hwq.verify import (
    drift_bounds_abandon_check,
    drift_identity_check,
    generator_identity_check,
    lyapunov_pointwise_check,
)

two_ab = build_config([ClassParams(0.5, 1.0, 0.5), ClassParams(1.0, 2.0, 1.0)], 16.0, 1.0)
two_nu0 = build_config([ClassParams(0.5, 1.0, 0.0), ClassParams(1.0, 2.0, 0.0)], 16.0, 1.0)

rep = drift_identity_check(two_ab, PREEMPTIVE)
print(f"drift identity over {rep.n_states} states: "
      f"max relative error {rep.max_rel_err:.2e}, violations {rep.violations}")

gen = build_generator(enumerate_states(two_nu0, NONPREEMPTIVE, 60))
print("\nexponential Lyapunov bound (nu = 0, non-preemptive):")
for theta in (0.1, 0.5, 1.0):
    r = lyapunov_pointwise_check(two_nu0, NONPREEMPTIVE, theta, gen=gen)
    print(f"  theta={theta:<4} violations={r.violations} worst slack={r.worst_slack:.4f}")

rep = drift_bounds_abandon_check(two_ab, PREEMPTIVE, K=60)
print(f"\nabandonment drift bounds: violations={rep.violations} "
      f"(upper slack >= {rep.upper.worst_slack:.2e}, lower slack >= {rep.lower.worst_slack:.2e})")

# stationarity makes E_pi[Abar F] vanish for exponential test functions
rep = generator_identity_check(two_ab, PREEMPTIVE, theta=0.2, k=3.0, K=50)
print(f"\ngenerator identity (deficit ~ {rep.deficit:.1e}):")
for row in rep.rows:
    print(f"  E_pi[Abar {row.functional}] = {row.residual:.2e} (bound {row.bound:.2e})")
