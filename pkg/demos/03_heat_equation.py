"""
Space-time increments of the stochastic heat equation
=====================================================

The mild solution u(t, y) driven by space-time white noise, started from
zero, has an explicit covariance.  Its squared rectangular increment splits
into three kernel integrals, and is dominated by twice the gap integral
over [0, |t - s|].  The function rho controls that bound uniformly.
"""

import math

import numpy as np

from multigrr import (CovarianceModel, ExperimentSpec, heat_cov, heat_sq_increment, heat_sq_increment_bound,
                      lemma51_brackets, refinement_sweep, rho)

print("Var u(1, y) =", float(heat_cov([1.0, 0.0], [1.0, 0.0])), "sqrt(1/pi) =", math.sqrt(1 / math.pi))

s, t, x, y = 0.2, 0.7, 0.3, 0.45
b = heat_sq_increment_bound(s, t, x, y, alpha=0.2)
print(f"increment variance {b.value:.5f} <= {b.bound1:.5f} <= {b.bound2:.5f}")
d = abs(x - y)
print("rho bound:", d * rho(abs(t - s) / d ** 2))

# the bracket for the gap integral between a and b
print(lemma51_brackets(1.0, 4.0, 1.0))

# rho grows like sqrt(u) near zero and saturates at 2 sqrt 2
for v in (1e-4, 1e-2, 1.0, 100.0, math.inf):
    print(f"rho({v}) = {rho(v):.6f}")

# sup ratios against |t-s|^(1/4-a) |x-y|^(2a) with iterated-log factors
spec = ExperimentSpec(CovarianceModel.heat(), (17, 17), form="heat", alpha=0.125, delta_max=0.25, replicates=5)
rep = refinement_sweep(spec, [(17, 17), (33, 33)])
print("all finite:", rep.all_finite, [round(g["sup_ratio"]["median"], 3) for g in rep.per_grid()])
print("jitter used per grid:", rep.jitter)

# increments shrink with the box
print([float(heat_sq_increment(0.5, 0.5 + h, 0.5, 0.5 + h)) for h in np.geomspace(0.25, 1e-3, 4)])
