"""Majority-rule block renormalization for the 2d Ising model in lattice-gas form.

The package computes constrained free energies f(X) of block-spin
configurations, inverts them on the subset lattice to obtain the gas
coefficients of the renormalized Hamiltonian, converts to the spin basis
either exactly on a subfamily or by a minimax fit, and ships the error
diagnostics used to judge truncation quality.  Everything deterministic is
reproducible bit for bit; the Monte Carlo oracle is seeded.
"""

from .lattice import (
    SymmetryClass,
    canonical_dihedral,
    canonical_translate,
    dihedral_orbit,
    enumerate_classes,
    format_sites,
    parse_sites,
    spread,
    spread_within,
    translate,
)
from .model import Coupling, critical_beta, kernel_weight
from .interaction import (
    ABSOLUTE,
    GAS,
    PER_CLASS,
    SPIN,
    FreeEnergyTable,
    Interaction,
    MissingFreeEnergyError,
    evaluate,
    gas_to_spin,
    mobius_forward,
    mobius_invert,
    spin_to_gas,
    table_from_csv,
    table_to_csv,
)
from .engine import (
    ENGINE_TAG,
    EngineError,
    TruncationPolicy,
    Volume,
    block_collection,
    block_collection_size,
    embed_in_volume,
    free_energy_batch,
    renormalized_hamiltonian,
)
from .oracle import MAX_EXACT_SPINS, exact_Hbar, exact_f, metropolis_f
from .spinfit import (
    FitProblem,
    SimplexFailure,
    design_entry,
    partially_exact,
    simplex_minimax,
    uniformly_close,
)
from .diagnostics import (
    DecayReport,
    convergence_metrics,
    decay_report,
    dihedral_error,
    finite_volume_error,
    norm_tail,
    threshold_counts,
)

__version__ = "0.1.0"
