import itertools
import math

import pytest

from blockrg.engine import (
    EngineError,
    TruncationPolicy,
    Volume,
    block_collection,
    block_collection_size,
    embed_in_volume,
    free_energy_batch,
    initial_state,
    renormalized_hamiltonian,
    sum_block,
)
from blockrg.lattice import enumerate_classes, translate
from blockrg.model import Coupling, critical_beta
from blockrg.oracle import exact_Hbar, exact_f

CRIT = Coupling(critical_beta())
LOOSE = TruncationPolicy.none()


def _strip(n):
    return Volume.from_blocks([(i, 0) for i in range(n)])


def test_volume_square_geometry():
    vol = Volume.square(2)
    assert len(vol.blocks) == 25
    assert vol.n_spins == 100
    assert (0, 0) in vol.sites and (-4, -4) in vol.sites and (5, 5) in vol.sites
    assert (6, 0) not in vol.sites


def test_volume_from_blocks():
    vol = _strip(2)
    assert vol.n_spins == 8
    assert vol.sites == frozenset(
        (x, y) for x in range(4) for y in range(2))


def test_truncation_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(-1.0)
    with pytest.raises(ValueError):
        TruncationPolicy(2.0, max_cardinality=0)
    assert math.isinf(TruncationPolicy.none().cutoff)


def test_block_collection_smallest_cutoffs():
    singles = block_collection((0, 0), TruncationPolicy(0.0))
    assert sorted(singles) == [((0, 0),), ((0, 1),), ((1, 0),), ((1, 1),)]
    # S=0.5 adds the pairs at unit distance that live on the sweep boundary:
    # the four inside the block and one reaching into the unsummed row
    half = block_collection((0, 0), TruncationPolicy(0.5))
    assert len(half) == 9
    assert set(half) == set(singles) | {
        ((0, 0), (0, 1)), ((0, 0), (1, 0)), ((1, 0), (1, 1)),
        ((0, 1), (1, 1)), ((1, 0), (2, 0))}


def test_block_collection_translates_with_block():
    policy = TruncationPolicy(2.0)
    origin = block_collection((0, 0), policy)
    moved = block_collection((3, -1), policy)
    assert moved == [translate(sites, 6, -2) for sites in origin]


def test_block_collection_size_agrees_with_enumeration():
    for cutoff in (0.0, 0.5, 2.0, 8.0):
        policy = TruncationPolicy(cutoff)
        assert block_collection_size(policy) == len(block_collection((0, 0), policy))


def test_block_collection_cardinality_cap():
    capped = block_collection((0, 0), TruncationPolicy(8.0, max_cardinality=2))
    assert max(len(s) for s in capped) == 2
    full = block_collection((0, 0), TruncationPolicy(8.0))
    assert set(capped) == {s for s in full if len(s) <= 2}


def test_block_collection_infinite_cutoff_rejected():
    with pytest.raises(EngineError):
        block_collection((0, 0), LOOSE)


def test_single_block_sum_at_beta_zero():
    # 5 block configs with at most one occupied site carry kernel weight 1
    # and 6 tie configs carry 1/2, so the constrained sum is 8
    vol = _strip(1)
    state = initial_state((), vol, Coupling(0.0))
    done = sum_block(state, (0, 0), TruncationPolicy(4.0), vol, Coupling(0.0))
    assert abs(done.accumulator - math.log(8.0)) < 1e-14
    assert not done.boundary.terms
    flipped = initial_state(((0, 0),), vol, Coupling(0.0))
    done = sum_block(flipped, (0, 0), TruncationPolicy(4.0), vol, Coupling(0.0))
    assert abs(done.accumulator - math.log(8.0)) < 1e-14


@pytest.mark.parametrize("config", [(), ((0, 0),), ((0, 0), (1, 0))])
def test_hbar_at_beta_zero_counts_blocks(config):
    vol = _strip(2)
    value = renormalized_hamiltonian(config, vol, LOOSE, Coupling(0.0))
    assert abs(value - (-2 * math.log(8.0))) < 1e-12


def test_engine_matches_oracle_on_strip_no_truncation():
    vol = _strip(2)
    for config in [(), ((0, 0),), ((1, 0),), ((0, 0), (1, 0))]:
        engine = renormalized_hamiltonian(config, vol, LOOSE, CRIT)
        assert abs(engine - exact_Hbar(config, vol, CRIT)) <= 1e-12


def test_sweep_orders_agree_without_truncation():
    vol = Volume.from_blocks([(i, j) for i in range(2) for j in range(2)])
    for config in [(), ((0, 0),), ((0, 0), (1, 1))]:
        row = renormalized_hamiltonian(config, vol, LOOSE, CRIT, sweep="row")
        col = renormalized_hamiltonian(config, vol, LOOSE, CRIT, sweep="column")
        assert abs(row - col) <= 1e-12


def test_truncated_f_zero_at_beta_zero():
    classes = enumerate_classes(2.0, "translation")
    table = free_energy_batch(classes, Volume.square(2), TruncationPolicy(4.0),
                              Coupling(0.0))
    assert len(table.values) == len(classes)
    assert max(abs(v) for v in table.values.values()) <= 1e-12


def test_embed_in_volume_centers_and_reports_margin():
    vol = Volume.square(2)          # blocks -2..2, sites -4..5
    moved, margin = embed_in_volume(((0, 0), (1, 0)), vol)
    assert margin >= 1
    base_x = min(x for x, _ in moved)
    base_y = min(y for _, y in moved)
    assert translate(moved, -base_x, -base_y) == ((0, 0), (1, 0))


def test_embed_in_volume_rejects_oversized_sets():
    with pytest.raises(ValueError):
        embed_in_volume(tuple((2 * i, 0) for i in range(30)), Volume.square(1))


def test_free_energy_batch_resume_skips_done_entries():
    classes = enumerate_classes(0.5, "translation")
    vol, policy = Volume.square(2), TruncationPolicy(4.0)
    full = free_energy_batch(classes, vol, policy, CRIT)
    partial = free_energy_batch(classes[:1], vol, policy, CRIT)
    resumed = free_energy_batch(classes, vol, policy, CRIT, existing=partial)
    assert resumed.values == full.values


def test_free_energy_batch_parallel_matches_serial():
    classes = enumerate_classes(2.0, "translation")
    vol, policy = Volume.square(2), TruncationPolicy(4.0)
    serial = free_energy_batch(classes, vol, policy, CRIT, jobs=1)
    parallel = free_energy_batch(classes, vol, policy, CRIT, jobs=2)
    assert serial.values == parallel.values       # bitwise, not approximate
    assert serial.meta == parallel.meta


def test_free_energy_batch_meta_records_run():
    table = free_energy_batch(enumerate_classes(0.0), Volume.square(1),
                              TruncationPolicy(2.0), CRIT)
    assert table.meta["L"] == 1
    assert table.meta["C_B"] == 2.0
    assert table.meta["beta"] == repr(critical_beta())
    assert "engine" in table.meta


def test_truncation_convergence_toward_no_truncation():
    # on a fixed small volume the truncated sweep approaches the exact one
    vol = _strip(3)
    config = ((1, 0),)
    exact = renormalized_hamiltonian(config, vol, LOOSE, CRIT)
    errs = []
    for cutoff in (0.5, 2.0, 8.0, 30.0):
        approx = renormalized_hamiltonian(config, vol, TruncationPolicy(cutoff), CRIT)
        errs.append(abs(approx - exact))
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-10


def test_engine_f_matches_oracle_f_on_square():
    vol = Volume.from_blocks([(i, j) for i in range(2) for j in range(2)])
    base = renormalized_hamiltonian((), vol, LOOSE, CRIT)
    for blocks in [((0, 0),), ((0, 0), (1, 1)), ((0, 0), (0, 1), (1, 0))]:
        f_engine = renormalized_hamiltonian(blocks, vol, LOOSE, CRIT) - base
        assert abs(f_engine - exact_f(blocks, vol, CRIT)) <= 1e-12
