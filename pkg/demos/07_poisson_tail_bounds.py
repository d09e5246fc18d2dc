# Gaussian-type bounds on the lower Poisson tail, evaluated numerically.
#
# For H ~ Poisson(p) the pmf satisfies h_n <= C p^{-1/2} exp(-(n-p)^2/(2p))
# for all n <= p with a constant C independent of p; the scan below finds
# the minimal such C.  It follows that E exp(theta ((H-p)^-)^2 / p) stays
# bounded as p -> infinity for theta < 1/2, with an explicit bound from a
# Gaussian integral comparison.

import math

from hwq.exact import (
    negpart_square_bound,
    negpart_square_mgf,
    poisson_bound_scan,
    poisson_pmf,
    scaled_poisson_mgf,
)

print("minimal C with pmf(n) <= C p^-1/2 exp(-(n-p)^2/(2p)) on n <= p:")
for p in (50, 100, 1000, 10_000):
    print(f"  p={p:>6}: C = {poisson_bound_scan(p):.6f}")
print(f"  (mode value alone gives ~1/sqrt(2 pi) = {1/math.sqrt(2*math.pi):.6f})")

print("\nnegative-part square MGF vs its integral-comparison bound (theta=0.4):")
for p in (50, 100, 1000):
    v = negpart_square_mgf(0.4, p)
    b = negpart_square_bound(0.4, p)
    print(f"  p={p:>5}: E exp(0.4 ((H-p)^-)^2/p) = {v:.5f} <= {b:.5f}")

print("\nscaled Poisson MGF approaching its Gaussian limit:")
theta = 1.0
for r in (25, 100, 400, 1600):
    v = scaled_poisson_mgf(theta, 1.0, r)
    print(f"  r={r:>5}: E exp(G_hat) = {v:.6f}  (limit e^0.5 = {math.exp(0.5):.6f})")

print(f"\npmf sanity: P(H=4 | p=4) = {poisson_pmf(4.0, 4):.6f}")
