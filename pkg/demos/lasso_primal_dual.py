"""A lasso problem through the primal-dual solver.

minimize  lam |x|_1 + 1/2 |M x - b|^2

is written with f = lam |.|_1 and one block g = 1/2 |. - b|^2 composed with
L = M. The solver only touches M through products and g through the prox
of its conjugate. The answer is compared with a plain proximal gradient
(ISTA) run written out below.

Run: python demos/lasso_primal_dual.py
"""

import numpy as np

from fbfsplit import (ConvexBlock, ConvexProblem, FBFConfig, make_forward, make_function,
                      solve_convex)

rng = np.random.default_rng(0)
m, d, lam = 12, 6, 0.5
M = rng.normal(size=(m, d))
x_true = np.array([2.0, 0.0, -1.0, 0.0, 0.0, 0.5])
b = M @ x_true + 0.05 * rng.normal(size=m)

problem = ConvexProblem(z=np.zeros(d), f=make_function("l1", d, weight=lam),
                        h_grad=make_forward("zero", d),
                        blocks=[ConvexBlock(r=np.zeros(m),
                                            g=make_function("quadratic", m, center=b), L=M)])
trace, x, v = solve_convex(problem, FBFConfig(max_iters=20_000, stop_tol=1e-12))
print(f"primal-dual FBF: {len(trace)} iterations, status {trace.status}")

# reference: ISTA with step 1/|M|^2
t = 1.0 / np.linalg.norm(M, 2) ** 2
z = np.zeros(d)
for _ in range(20_000):
    w = z - t * M.T @ (M @ z - b)
    z = np.sign(w) * np.maximum(np.abs(w) - t * lam, 0.0)


def objective(u):
    return lam * np.abs(u).sum() + 0.5 * np.sum((M @ u - b) ** 2)


print("x (FBF) :", np.round(x, 6))
print("x (ISTA):", np.round(z, 6))
print(f"max difference {np.max(np.abs(x - z)):.1e}; objectives "
      f"{objective(x):.10f} vs {objective(z):.10f}")
# the dual variable is the residual M x - b at the solution
print(f"|v - (M x - b)| = {np.linalg.norm(v[0] - (M @ x - b)):.1e}")
