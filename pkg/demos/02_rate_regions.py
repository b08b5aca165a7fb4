"""
Secret-key rate regions: inner and outer bounds
===============================================

Each of the two strategies (forward: users 1 and 2 talk to user 3;
backward: user 3 talks to both) has an achievable inner bound and an outer
bound, parameterized by auxiliary channels.  Regions are computed by
evaluating the rate formulas on a simplex lattice of channels and taking
the Pareto frontier of the union.
"""

from skregion import (
    AuxSystem,
    Channel,
    GridSpec,
    single_key_capacity,
    enumerate_region,
    explicit_outer,
    forward_inner_point,
)
from skregion.sources import broadcast_source, xor_source

# --- the xor source: one bit of key for each user, but not both at once ---
xor = xor_source()
aux = AuxSystem.forward(
    xor,
    Channel.identity("X1", 2, "S"), Channel.identity("X2", 2, "T"),
    Channel.constant("U", "S", 2), Channel.constant("V", "T", 2))
point = forward_inner_point(aux)
print("xor at identity channels:")
print("  R1 <=", point.r1_max, " R2 <=", point.r2_max, " R1+R2 <=", point.sum_max)

region = enumerate_region(xor, "forward-inner", GridSpec(2, 2, 1, 1, 1))
print("  frontier over the q=1 lattice:", region.frontier)

# --- the quarter-noise star: the case-2 square ---
star = broadcast_source("X3", 0.25, 0.25)
print("\nstar source explicit outer rectangle:", explicit_outer(star))
inner = enumerate_region(star, "forward-inner", GridSpec(2, 2, 1, 1, 1))
print("forward inner frontier:", [(round(a, 6), round(b, 6)) for a, b in inner.frontier])

# --- single-key (wiretap-only) capacity with the other user silent ---
cap = single_key_capacity(star, "forward", GridSpec(2, 1, 2, 1, 1))
print("\nsingle-key forward capacity bound on the grid:", round(cap, 6))

# --- the backward direction of a hidden-middle chain ---
chain = broadcast_source("X2", 0.25, 0.25)   # X1 - X2 - X3
back = enumerate_region(chain, "backward-inner", GridSpec(1, 2, 1, 1, 1))
print("\nchain source backward inner frontier:",
      [(round(a, 6), round(b, 6)) for a, b in back.frontier])
print("(the deterministic T = X3 point attains I(X2;X3|X1); user 1 gets nothing)")
