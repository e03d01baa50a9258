"""What the boundary cutoff buys and what it costs.

The engine's state after absorbing a block is a function on the boundary
sites, stored as one amplitude per excited subset.  The cutoff C_B keeps
only subsets of small spatial spread; larger C_B means more subsets, more
work, less error.  This script measures both sides of that trade on a
volume small enough to compare against exact enumeration.
"""

import itertools
import time

import numpy as np

from blockrg import (Coupling, TruncationPolicy, Volume, block_collection_size,
                     critical_beta, exact_f, renormalized_hamiltonian)

crit = Coupling(critical_beta())
vol = Volume.from_blocks([(i, j) for i in range(2) for j in range(2)])
configs = [c for r in range(1, 5)
           for c in itertools.combinations(vol.blocks, r)]
exact = {c: exact_f(c, vol, crit) for c in configs}

print(f"{'C_B':>6} {'kept subsets':>13} {'mean |error|':>13} {'seconds':>9}")
for cutoff in (0.5, 2.0, 8.0, 30.0, 80.0):
    policy = TruncationPolicy(cutoff)
    n_subsets = block_collection_size(policy)
    t0 = time.perf_counter()
    base = renormalized_hamiltonian((), vol, policy, crit)
    errs = [abs(renormalized_hamiltonian(c, vol, policy, crit) - base
                - exact[c]) for c in configs]
    dt = time.perf_counter() - t0
    print(f"{cutoff:>6g} {n_subsets:>13d} {np.mean(errs):>13.3e} {dt:>9.2f}")

print("\nthe kept-subset count is per boundary template; cost per block")
print("scales with it. past C_B near 8 the error on this volume hits the")
print("floor set by arithmetic, not truncation.")
