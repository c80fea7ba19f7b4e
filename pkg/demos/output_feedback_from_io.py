"""A stabilizing compensator for an unstable plant from input/output samples.

States are never measured. They are reconstructed, up to a change of
coordinates, from the overlap of past and future Hankel row spaces, and an
observer-based compensator is built on the reconstruction.
"""

import numpy as np

from informativity import SystemModel, reconstruct_states, simulate, synth_io_feedback
from informativity.numerics import spectral_radius

rng = np.random.default_rng(3)
plant = SystemModel([[1.2, 1.0], [0.0, 0.6]], [[0.0], [1.0]], [[1.0, 0.0]], [[0.0]])
print("open-loop spectral radius:", spectral_radius(plant.A))

T, k = 60, 3
exp = simulate(plant, rng.standard_normal(2), rng.standard_normal((1, T)))

rec = reconstruct_states(exp.u, exp.y, n=2, k=k)
print("Hankel rank", rec.hankel_rank, "and state dimension", rec.intersection_dim)
X_true = exp.x[:, k:T - k + 1]
S = np.linalg.lstsq(X_true.T, rec.X_bar.T, rcond=None)[0].T
print("reconstruction = S x(t) up to", np.max(np.abs(S @ X_true - rec.X_bar)))

cert = synth_io_feedback(exp.u, exp.y, n=2, k=k)
comp = cert.compensator
closed = comp.closed_loop(plant.A, plant.B, plant.C, plant.D)
print("closed-loop spectral radius with the real plant:", spectral_radius(closed))

# run the loop from a disturbed state
x, w = np.array([1.0, -1.0]), np.zeros(2)
for t in range(40):
    y = plant.C @ x
    u = comp.M @ w
    x, w = plant.A @ x + plant.B @ u, comp.K @ w + comp.L @ y
print("|x(40)| =", np.linalg.norm(x))
