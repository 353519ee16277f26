"""A bilinear matrix game on boxes as a variational inequality.

min over x in [-1,1]^m, max over y in [-1,1]^k of x^T P y.

The saddle points solve the VI with f the box indicator and
B(x, y) = (P y, -P^T x), which is skew: monotone and Lipschitz but not
cocoercive. The duality gap has a closed form,
max_y x^T P y - min_x x^T P y = |P^T x|_1 + |P y|_1.

Run: python demos/matrix_game_vi.py
"""

import numpy as np

from fbfsplit import FBFConfig, make_function, solve_variational_inequality, vi_gap
from fbfsplit.operators import affine_forward

rng = np.random.default_rng(3)
m, k = 4, 3
P = rng.normal(size=(m, k))
K = np.block([[np.zeros((m, m)), P], [-P.T, np.zeros((k, k))]])
B = affine_forward(K)
f = make_function("box_projection", m + k)


def duality_gap(u):
    x, y = u[:m], u[m:]
    return np.abs(P.T @ x).sum() + np.abs(P @ y).sum()


x0 = rng.uniform(-1, 1, size=m + k)
print(f"Lipschitz constant |P| = {B.beta:.4f}")
for iters in (10, 100, 1000, 5000):
    _, u = solve_variational_inequality(f, B, FBFConfig(max_iters=iters), x0)
    print(f"{iters:5d} iterations: duality gap {duality_gap(u):.3e}")

ys = rng.uniform(-1, 1, size=(2000, m + k))
print(f"worst sampled VI gap at the last iterate: {vi_gap(f, B, u, ys):.2e}")
