"""Three tiny data sets and what they do and do not tell us.

Run with ``python demos/small_data_sets.py``.
"""

import numpy as np

from informativity import (
    BlockMatrices,
    Controller,
    NotInformative,
    consistent_set,
    informative_controllability,
    informative_stabilizability,
    informative_sysid,
    stabilize_algebraic,
    stabilize_lmi,
    verify_controller,
)

np.set_printoptions(precision=4, suppress=True)

# An impulse pushed through an unknown two-state system. The record is too
# short to pin the system down, yet every explanation of it is controllable.
shift = BlockMatrices.from_states([[0, 1, 0], [0, 0, 1]], [[1, 0]])
print("impulse response")
print("  identifiable:", bool(informative_sysid(shift)))
print("  controllable for every explanation:", bool(informative_controllability(shift)))
family = consistent_set(shift)
rng = np.random.default_rng(0)
for _ in range(3):
    member = family.member(rng.standard_normal((family.free_rows, family.null_dimension)))
    print("  a consistent A:", member.A.tolist(), " B:", member.B.ravel().tolist())

# Two steps of a two-state system. Still not identifiable, but one gain
# stabilizes all explanations at once, and the closed loop is the same matrix
# for each of them.
two = BlockMatrices.from_states([[1, 0.5, -0.25], [0, 1, 1]], [[-1, -1]])
print("\ntwo-step record")
print("  identifiable:", bool(informative_sysid(two)))
cert = stabilize_algebraic(two)
print("  gain:", cert.K.ravel(), " closed loop radius:", round(cert.spectrum.spectral_radius, 6))
print("  same gain from the LMI:", stabilize_lmi(two).K.ravel())
rep = verify_controller(consistent_set(two), Controller("gain", cert.K), samples=200)
print(f"  checked on {rep.checked} consistent systems, closed-loop spread {rep.closed_loop_spread:.1e}")

# One sample: x(0) = 0, u(0) = 1, x(1) = 1. Every system x+ = a x + u fits.
# Each of them is stabilizable, but no single gain works for all a.
one = BlockMatrices.from_states([[0, 1]], [[1]])
print("\none-step record")
print("  stabilizable for every explanation:", bool(informative_stabilizability(one)))
try:
    stabilize_lmi(one)
except NotInformative as exc:
    print("  stabilizing gain:", exc.reason)
for k in (-2.0, -0.5, 0.5):
    rep = verify_controller(consistent_set(one), Controller("gain", [[k]]))
    sys_ = rep.falsifier["system"]
    print(f"  K = {k:+.1f} fails for a = {sys_['A'][0][0]:+.1f}")
