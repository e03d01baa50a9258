"""Nearest-neighbor Ising model and the 2x2 majority-rule block kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .lattice import Site, Sites


@dataclass(frozen=True)
class Coupling:
    """Inverse temperature absorbed into the Hamiltonian; beta > 0 required."""

    beta: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")


def critical_beta() -> float:
    """Exact critical coupling of the square-lattice model, log(1+sqrt(2))/2."""
    return math.log(1.0 + math.sqrt(2.0)) / 2.0


@dataclass(frozen=True)
class Block:
    """2x2 block of lattice sites addressed by its block index (i, j)."""

    index: tuple[int, int]

    @property
    def sites(self) -> Sites:
        i, j = self.index
        return ((2 * i, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j), (2 * i + 1, 2 * j + 1))


def block_of_site(site: Site) -> tuple[int, int]:
    x, y = site
    return (x // 2, y // 2)


def gas_edge_terms(beta: float, edge: tuple[Site, Site]) -> dict[Sites, float]:
    """Lattice-gas form of one Hamiltonian bond -beta*s_i*s_j under s = 1-2n."""
    i, j = edge
    if abs(i[0] - j[0]) + abs(i[1] - j[1]) != 1:
        raise ValueError(f"edge endpoints must be nearest neighbors, got {i} and {j}")
    a, b = sorted((i, j))
    return {
        (): -beta,
        (a,): 2.0 * beta,
        (b,): 2.0 * beta,
        (a, b): -4.0 * beta,
    }


# kernel weight by (block value, number of occupied sites in the block);
# occupied (n=1) means spin -1, so 0..1 occupied sites is a spin-plus majority
_KERNEL = (
    (1.0, 1.0, 0.5, 0.0, 0.0),  # block value 0  (block spin +1)
    (0.0, 0.0, 0.5, 1.0, 1.0),  # block value 1  (block spin -1)
)


def majority_kernel(block_value: int, gas_values) -> float:
    """Majority-rule weight for one block; ties split evenly."""
    if block_value not in (0, 1):
        raise ValueError(f"block value must be 0 or 1, got {block_value}")
    k = 0
    for v in gas_values:
        if v not in (0, 1):
            raise ValueError(f"site gas values must be 0 or 1, got {v}")
        k += v
    if len(gas_values) != 4:
        raise ValueError("a block carries exactly four site values")
    return _KERNEL[block_value][k]


def kernel_weight(block_value: int, occupied: int) -> float:
    """Majority-rule weight given just the occupied-site count 0..4."""
    return _KERNEL[block_value][occupied]
