"""Acceptance gate: one test per shipped guarantee, end to end.

Each test exercises a publicly documented behavior at its stated tolerance.
The heavy free-energy tables are produced through the command line interface
into tests/_cache and reused on later runs, so the first invocation spends
tens of minutes building fixtures and later ones finish in a few minutes.

test_c06 pins the size of the truncated boundary collection at cutoff 260 to
a fixed census value.  The enumeration reproducibly yields a different count,
so that one test fails; the number asserted is kept as is rather than being
adjusted to match the implementation.
"""

import itertools
from pathlib import Path

import numpy as np
import pytest

from blockrg import (
    Coupling,
    FitProblem,
    FreeEnergyTable,
    Interaction,
    TruncationPolicy,
    Volume,
    block_collection_size,
    canonical_translate,
    critical_beta,
    dihedral_error,
    enumerate_classes,
    exact_Hbar,
    exact_f,
    finite_volume_error,
    free_energy_batch,
    gas_to_spin,
    kernel_weight,
    metropolis_f,
    mobius_forward,
    mobius_invert,
    partially_exact,
    renormalized_hamiltonian,
    spin_to_gas,
    uniformly_close,
)
from blockrg.cli import main, read_table
from blockrg.interaction import GAS, PER_CLASS
from blockrg.spinfit import simplex_minimax

CACHE = Path(__file__).resolve().parent / "_cache"
CRIT = Coupling(critical_beta())
LOOSE = TruncationPolicy.none()
NN = ((0, 0), (1, 0))


# ---------------------------------------------------------------------------
# cached fixtures, built through the CLI so the batch pipeline itself is
# exercised; reruns resume from the cached tables

def _cli(*args) -> None:
    rc = main([str(a) for a in args])
    assert rc == 0, f"cli failed: {args}"


def _load(name: str) -> FreeEnergyTable:
    with open(CACHE / name / "free_energies.csv") as stream:
        values, meta = read_table(stream)
    return FreeEnergyTable(values, meta)


@pytest.fixture(scope="session")
def dihedral_tables():
    """Volumes L = 2..6, dihedral classes with spread <= 10, cutoff 30."""
    out = {}
    for L in (2, 3, 4, 5, 6):
        _cli("free-energies", "--out", CACHE / f"dih_L{L}", "-C", 10.0,
             "-L", L, "--cb", 30.0, "--class-mode", "dihedral")
        out[L] = _load(f"dih_L{L}")
    return out


@pytest.fixture(scope="session")
def wide_tables():
    """L = 8 translation classes with spread <= 10 at cutoffs 8 and 30."""
    out = {}
    for cb in (8.0, 30.0):
        name = f"l8_cb{cb:g}"
        _cli("free-energies", "--out", CACHE / name, "-C", 10.0,
             "-L", 8, "--cb", cb)
        out[cb] = _load(name)
    return out


@pytest.fixture(scope="session")
def stability_files():
    """Gas coefficients from class cutoffs 6 and 12 on the same volume."""
    for tag, C in (("stab_c6", 6.0), ("stab_c12", 12.0)):
        _cli("free-energies", "--out", CACHE / tag, "-C", C, "-L", 3,
             "--cb", 8.0)
        if not (CACHE / tag / "gas_coeffs.csv").exists():
            _cli("gas-coeffs", "--out", CACHE / tag)
    return CACHE / "stab_c6" / "gas_coeffs.csv", \
        CACHE / "stab_c12" / "gas_coeffs.csv"


@pytest.fixture(scope="session")
def fit_table():
    """A small complete table for fit consistency checks."""
    _cli("free-energies", "--out", CACHE / "fit_L4", "-C", 6.0, "-L", 4,
         "--cb", 8.0)
    return _load("fit_L4")


def _subsets(sites):
    for r in range(len(sites) + 1):
        yield from itertools.combinations(sites, r)


# ---------------------------------------------------------------------------
# the criteria

def test_c01_projection_weights_sum_to_one():
    # every 2x2 configuration distributes unit weight over the two block
    # values, and every individual weight is 0, 1/2 or 1
    for bits in itertools.product((0, 1), repeat=4):
        occupied = sum(bits)
        total = kernel_weight(0, occupied) + kernel_weight(1, occupied)
        assert total == 1.0
        for v in (0, 1):
            assert kernel_weight(v, occupied) in (0.0, 0.5, 1.0)


def test_c02_mobius_round_trip_recovers_coefficients():
    # plant per-class coefficients on every translation class occurring
    # among subsets of a 5-site seed, sum them into free energies, invert
    sites = ((0, 0), (1, 0), (0, 1), (2, 1), (1, 2))
    rng = np.random.default_rng(11)
    classes = sorted({canonical_translate(S) for S in _subsets(sites) if S})
    c = Interaction({cls: rng.normal() for cls in classes}, GAS, PER_CLASS)
    table = FreeEnergyTable({cls: mobius_forward(c, cls) for cls in classes})
    worst = max(abs(mobius_invert(table, S) - c.coefficient(S))
                for S in _subsets(sites) if S)
    assert worst <= 1e-12


def test_c03_gas_spin_change_of_basis_round_trip():
    rng = np.random.default_rng(23)
    keys = [tuple(sorted({(int(a), int(b)) for a, b in
                          rng.integers(-2, 3, size=(rng.integers(1, 5), 2))}))
            for _ in range(200)]
    terms = {k: rng.normal() for k in dict.fromkeys(keys) if k}
    gas = Interaction(terms, basis=GAS)
    back = spin_to_gas(gas_to_spin(gas))
    worst = max(abs(back.coefficient(k) - v) for k, v in terms.items())
    assert worst <= 1e-12
    assert len(terms) >= 64


def test_c04_engine_reproduces_brute_force_hamiltonians():
    # strips of 2 and 3 blocks plus the 4-block square, every block
    # configuration of each (28 in total), at three temperatures
    volumes = [
        Volume.from_blocks([(0, 0), (1, 0)]),
        Volume.from_blocks([(0, 0), (1, 0), (2, 0)]),
        Volume.from_blocks([(i, j) for i in range(2) for j in range(2)]),
    ]
    for beta in (0.0, critical_beta(), 0.6):
        coupling = Coupling(beta)
        checked = 0
        for vol in volumes:
            for config in _subsets(tuple(vol.blocks)):
                lhs = renormalized_hamiltonian(config, vol, LOOSE, coupling)
                assert abs(lhs - exact_Hbar(config, vol, coupling)) <= 1e-12
                checked += 1
        assert checked == 4 + 8 + 16


def test_c05_infinite_temperature_free_energies_vanish():
    classes = enumerate_classes(2.0, "translation")
    for L, cb in ((2, 2.0), (3, 8.0)):
        table = free_energy_batch(classes, Volume.square(L),
                                  TruncationPolicy(cb), Coupling(0.0))
        assert max(abs(v) for v in table.values.values()) <= 1e-12


def test_c06_boundary_collection_census_at_cutoff_260():
    assert block_collection_size(TruncationPolicy(260.0)) == 10763


def test_c07_finite_volume_error_decays_geometrically(dihedral_tables):
    # each step L -> L+1 must at least halve the table movement
    deltas = [finite_volume_error(dihedral_tables[L], dihedral_tables[L + 1])
              for L in (2, 3, 4, 5)]
    assert all(d > 0 for d in deltas)
    for wider, narrower in zip(deltas, deltas[1:]):
        assert narrower <= 0.5 * wider


def test_c08_truncation_error_decreases_with_cutoff():
    vol = Volume.from_blocks([(i, j) for i in range(2) for j in range(2)])
    configs = [c for c in _subsets(tuple(vol.blocks)) if c]
    exact = {c: exact_f(c, vol, CRIT) for c in configs}
    means = []
    for cutoff in (0.5, 2.0, 8.0, 30.0):
        policy = TruncationPolicy(cutoff)
        base = renormalized_hamiltonian((), vol, policy, CRIT)
        errs = [abs(renormalized_hamiltonian(c, vol, policy, CRIT) - base
                    - exact[c]) for c in configs]
        means.append(float(np.mean(errs)))
    assert all(b <= a + 1e-15 for a, b in zip(means, means[1:]))
    assert means[-1] <= 1e-10


def test_c09_larger_cutoff_restores_lattice_symmetry(wide_tables):
    # translation tables carry every dihedral orbit separately, so the
    # residual orbit scatter measures how much truncation breaks x/y symmetry
    assert dihedral_error(wide_tables[30.0]) < dihedral_error(wide_tables[8.0])


def test_c10_coefficients_stable_under_collection_growth(stability_files):
    # enlarging the class collection must not touch previously computed
    # coefficients: the small run's rows reappear verbatim in the large run
    small_path, big_path = stability_files

    def rows(path):
        return [line for line in path.read_text().splitlines()
                if line and not line.startswith("#")]

    small, big = rows(small_path), rows(big_path)
    assert small[0] == big[0]
    assert len(small) - 1 == 308 and len(big) - 1 == 6072
    assert set(small[1:]) <= set(big[1:])


def test_c11_fit_schemes_consistent(fit_table):
    small = [c.representative for c in enumerate_classes(2.0, "translation")]
    wide = [c.representative for c in enumerate_classes(6.0, "translation")]
    c_small = Interaction({Y: mobius_invert(fit_table, Y) for Y in small},
                          GAS, PER_CLASS)
    d_partial = partially_exact(c_small, small)

    # fitting exactly as many constraints as coefficients interpolates, and
    # both schemes then deliver the same numbers
    d_square, eps_square = uniformly_close(FitProblem(small, small, fit_table))
    assert eps_square <= 1e-9
    gap = max(abs(d_square.coefficient(Y) - d_partial.coefficient(Y))
              for Y in small)
    assert gap <= 1e-8

    # against a wider constraint set the minimax fit can only do better than
    # the partially exact coefficients it competes with
    problem = FitProblem(small, wide, fit_table)
    _, eps_wide = uniformly_close(problem)
    A, f = problem.design(), problem.target_vector()
    d_vec = np.array([d_partial.coefficient(Y) for Y in problem.Y_classes])
    assert eps_wide <= np.abs(f - A @ d_vec).max() + 1e-12


def _vertex_minimax(A, f):
    """Exact minimax by dual vertex enumeration, for cross-checking.

    Some optimum of the Chebyshev problem activates k+1 signed residual
    constraints; solving every such (k+1)-subset in one batched call and
    keeping the best feasible candidate is slow but unarguable.
    """
    n, k = A.shape
    signed = np.vstack([np.hstack([A, np.ones((n, 1))]),
                        np.hstack([-A, np.ones((n, 1))])])
    rhs = np.concatenate([f, -f])
    combos = np.array(list(itertools.combinations(range(2 * n), k + 1)))
    M = signed[combos]
    ok = np.abs(np.linalg.det(M)) > 1e-10
    sols = np.linalg.solve(M[ok], rhs[combos[ok]][..., None])[..., 0]
    for idx in np.argsort(sols[:, k]):
        eps, d = sols[idx, k], sols[idx, :k]
        if eps < -1e-12:
            continue
        if np.abs(f - A @ d).max() <= eps + 1e-9:
            return eps
    raise AssertionError("no feasible vertex found")


def test_c12_minimax_solver_matches_vertex_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(100):
        k = int(rng.integers(1, 6))
        n = int(rng.integers(k + 2, 13))
        A = rng.normal(size=(n, k)).round(3)
        f = rng.normal(size=n)
        eps_vertex = _vertex_minimax(A, f)
        d, eps = simplex_minimax(A, f)
        assert abs(eps - eps_vertex) <= 1e-6
        assert abs(np.abs(f - A @ d).max() - eps) <= 1e-6


def test_c13_monte_carlo_agrees_with_exact_free_energy():
    vol = Volume.from_blocks([(i, j) for i in range(3) for j in range(2)])
    X = ((1, 0),)
    truth = exact_f(X, vol, CRIT)
    result = metropolis_f(X, X, vol, CRIT, samples=1_200_000, seed=20260823)
    assert result.missing == []
    assert result.samples >= 1_000_000
    dev = abs(result.estimates[X] - truth)
    assert dev <= 3.0 * result.errors[X]


def test_c14_scheme_choice_shifts_fitted_couplings(wide_tables,
                                                   dihedral_tables):
    # the nearest-neighbor coupling from different truncation schemes must
    # differ by far more than the residual finite-volume noise, i.e. the
    # scheme dependence is a real effect and not an artifact of the volume
    table = wide_tables[30.0]
    noise = max(finite_volume_error(dihedral_tables[5], dihedral_tables[6]),
                1e-12)
    couplings = []
    for chbar in (2.0, 6.0):
        ys = [c.representative for c in enumerate_classes(chbar, "translation")]
        c = Interaction({Y: mobius_invert(table, Y) for Y in ys},
                        GAS, PER_CLASS)
        couplings.append(partially_exact(c, ys).coefficient(NN))
    for chbar, cf in ((2.0, 6.0), (2.0, 10.0), (6.0, 6.0), (6.0, 10.0)):
        ys = [c.representative for c in enumerate_classes(chbar, "translation")]
        xs = [c.representative for c in enumerate_classes(cf, "translation")]
        d, _ = uniformly_close(FitProblem(ys, xs, table))
        couplings.append(d.coefficient(NN))
    spread = max(couplings) - min(couplings)
    assert spread > 10.0 * noise
