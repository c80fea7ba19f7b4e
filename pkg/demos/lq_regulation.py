"""LQ regulation straight from a measured trajectory.

The gain comes from a semidefinite program in the data, with no model in
between. We compare it with the Riccati solution of the true system and
check the cost it achieves by simulation.
"""

import numpy as np

from informativity import LqrWeights, SystemModel, dare_solve, gain_from_data, simulate
from informativity.data import BlockMatrices

np.set_printoptions(precision=5, suppress=True)
rng = np.random.default_rng(7)

A = np.array([[1.1, 0.4, 0.0], [0.0, 0.9, 0.5], [0.2, 0.0, 0.7]])
B = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
plant = SystemModel(A, B)
exp = simulate(plant, rng.standard_normal(3), rng.standard_normal((2, 30)))
data = BlockMatrices(exp.u, exp.x[:, :-1], exp.x[:, 1:])

w = LqrWeights(np.diag([1.0, 0.0, 2.0]), np.eye(2))
cert = gain_from_data(data, w)
P_true, K_true = dare_solve(A, B, w.Q, w.R)

print("gain from data:\n", cert.K)
print("gain from the model:\n", K_true)
print("largest difference:", np.max(np.abs(cert.K - K_true)))
print("SDP duality gap:", cert.sdp["duality_gap"])

x0 = np.array([1.0, -1.0, 0.5])
x, cost = x0, 0.0
for _ in range(300):
    u = cert.K @ x
    cost += x @ w.Q @ x + u @ w.R @ u
    x = A @ x + B @ u
print(f"simulated cost {cost:.6f}, predicted x0' P x0 = {x0 @ cert.P_plus @ x0:.6f}")
