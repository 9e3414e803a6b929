"""
The rectangular GRR inequality on a smooth field
================================================

Take f(x) = x_1 x_2 on the unit square.  Its rectangular increment over the
box spanned by x and y is exactly (x_1 - y_1)(x_2 - y_2), so with
Psi(u) = u^4 and p_k(u) = u the integrand of B is identically 1 and B = 1.
"""

import math

import numpy as np

from multigrr import GridField, GrrProblem, ModulusFunction, YoungFunction, b_functional, grr_rhs, verify_grr

psi = YoungFunction.power(4)
p = [ModulusFunction.power(1)] * 2
f = GridField.uniform(lambda x: x[..., 0] * x[..., 1], (17, 17))

# the right-hand side grows like sqrt(d_1 d_2); at the full box it is 512
for d in (0.25, 0.5, 1.0):
    print(f"RHS at delta=({d}, {d}): {grr_rhs(psi, p, 1.0, [d, d]):.3f}")

# the midpoint estimate of B misses the diagonal share 1/m on each axis
prob = GrrProblem(lambda x: x[..., 0] * x[..., 1], psi, p, cells=64)
print("B on 64 midpoint cells:", b_functional(prob), "continuum value 1")

# every node pair of the grid, closed-form B, no slack
rep = verify_grr(GrrProblem(f, psi, p), B=1.0)
print(rep.summary())

# a non-power modulus goes through the Stieltjes quadrature instead
u = np.linspace(0, 1, 257)
tab = ModulusFunction.tabulated(u, u)
print("tabulated p, 1-D RHS:", grr_rhs(psi, [tab], 1.0, [1.0]), "vs 16 sqrt 2 =", 16 * math.sqrt(2))
