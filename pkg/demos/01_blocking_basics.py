"""Where the whole thing starts: one block, four spins, a majority vote.

The coarse map sends each 2x2 cell of the fine lattice to a single block
variable.  In occupation variables a block is "occupied" when at least three
of its four sites are, and a 2-2 tie splits its weight evenly.  Summing the
projector against the Boltzmann factor over the fine spins gives the
renormalized Hamiltonian, which the engine does sequentially block by block.

Run it: python3 demos/01_blocking_basics.py
"""

import itertools
import math

from blockrg import (Coupling, TruncationPolicy, Volume, critical_beta,
                     exact_Hbar, kernel_weight, renormalized_hamiltonian)

# the projector itself, tabulated over the occupied-site count
print("weight of (block value, occupied count):")
for v in (0, 1):
    row = [kernel_weight(v, k) for k in range(5)]
    print(f"  value {v}: {row}")

# rows sum to one, so summing over block values just reproduces the
# partition function of the fine system
for k in range(5):
    assert kernel_weight(0, k) + kernel_weight(1, k) == 1.0

# at infinite temperature every fine configuration has weight 1 and a single
# block sums to 8 = 5 clear majorities + 6 ties at half weight each
vol = Volume.from_blocks([(0, 0)])
h = renormalized_hamiltonian((), vol, TruncationPolicy.none(), Coupling(0.0))
print(f"\nsingle block at beta=0: H = {h:.12f}, -ln 8 = {-math.log(8):.12f}")

# at the critical temperature, check the engine against brute force on a
# strip of three blocks (12 fine spins, small enough to enumerate)
crit = Coupling(critical_beta())
strip = Volume.from_blocks([(0, 0), (1, 0), (2, 0)])
print(f"\ncritical beta = {critical_beta():.12f}")
print("engine vs. enumeration on a 3-block strip:")
worst = 0.0
for r in range(4):
    for config in itertools.combinations(strip.blocks, r):
        a = renormalized_hamiltonian(config, strip, TruncationPolicy.none(), crit)
        b = exact_Hbar(config, strip, crit)
        worst = max(worst, abs(a - b))
print(f"  worst difference over all 8 configurations: {worst:.2e}")
