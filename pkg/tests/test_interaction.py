import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockrg.interaction import (
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
    read_table,
    spin_to_gas,
    table_from_csv,
    table_to_csv,
    write_table,
)

A = ((0, 0),)
B = ((1, 0),)
AB = ((0, 0), (1, 0))


def _subsets(sites):
    for n in range(len(sites) + 1):
        yield from itertools.combinations(sites, n)


def test_evaluate_examples():
    H = Interaction({A: 2.0, AB: -4.0}, GAS, ABSOLUTE)
    assert evaluate(H, A) == 2.0
    assert evaluate(H, ()) == 0.0
    edge = Interaction({(): -1.0, A: 2.0, B: 2.0, AB: -4.0}, GAS, ABSOLUTE)
    assert evaluate(edge, AB) == -1.0
    assert evaluate(edge, ()) == -1.0


def test_mobius_invert_small_cases():
    table = FreeEnergyTable({A: 1.5})
    assert mobius_invert(table, A) == 1.5
    # both singletons of the pair read the same translation-class value
    table = FreeEnergyTable({A: 1.0, AB: 2.5})
    assert mobius_invert(table, AB) == 2.5 - 1.0 - 1.0


def test_mobius_invert_missing_dependency_named():
    table = FreeEnergyTable({A: 1.0})
    with pytest.raises(MissingFreeEnergyError) as err:
        mobius_invert(table, AB)
    assert "{(0,0),(1,0)}" in str(err.value)
    assert err.value.sites == AB


def test_mobius_forward_example():
    c = Interaction({A: 1.0, B: 2.0, AB: -1.0}, GAS, ABSOLUTE)
    assert mobius_forward(c, AB) == 2.0
    assert mobius_forward(c, A) == 1.0


def test_mobius_round_trip_all_subsets_of_5():
    from blockrg.lattice import canonical_translate

    rng = np.random.default_rng(7)
    sites = ((0, 0), (1, 0), (0, 1), (2, 2), (1, 2))
    classes = sorted({canonical_translate(S) for S in _subsets(sites) if S})
    c = Interaction({cls: rng.normal() for cls in classes}, GAS, PER_CLASS)
    table = FreeEnergyTable({cls: mobius_forward(c, cls) for cls in classes})
    worst = max(abs(mobius_invert(table, S) - c.coefficient(S))
                for S in _subsets(sites) if S)
    assert worst <= 1e-12


def test_alternating_sum_vanishes():
    # the inversion identity: sum over subsets Z of W of (-1)^(|W|-|Z|) = 0
    for n in range(1, 11):
        total = sum((-1) ** (n - k) * math.comb(n, k) for k in range(n + 1))
        assert total == 0


def test_gas_to_spin_examples():
    pair = Interaction({AB: 1.0}, GAS, ABSOLUTE)
    d = gas_to_spin(pair)
    assert d.terms == {(): 0.25, A: -0.25, B: -0.25, AB: 0.25}
    assert d.basis == SPIN
    single = Interaction({A: 3.0}, GAS, ABSOLUTE)
    d = gas_to_spin(single)
    assert d.terms == {(): 1.5, A: -1.5}


def test_spin_to_gas_examples():
    d = Interaction({(): 0.25, A: -0.25, B: -0.25, AB: 0.25}, SPIN, ABSOLUTE)
    assert spin_to_gas(d).terms == {AB: 1.0}
    d = Interaction({(): 0.5, A: -0.5}, SPIN, ABSOLUTE)
    assert spin_to_gas(d).terms == {A: 1.0}


def test_basis_tags_checked():
    wrong = Interaction({A: 1.0}, SPIN, ABSOLUTE)
    with pytest.raises(ValueError):
        gas_to_spin(wrong)
    with pytest.raises(ValueError):
        spin_to_gas(Interaction({A: 1.0}, GAS, ABSOLUTE))


def test_basis_round_trip_64_terms():
    rng = np.random.default_rng(11)
    pool = [(x, y) for x in range(4) for y in range(3)]
    keys = set()
    while len(keys) < 64:
        size = int(rng.integers(0, 5))
        keys.add(tuple(sorted(rng.permutation(len(pool))[:size].tolist())))
    terms = {tuple(pool[i] for i in key): rng.normal() for key in keys}
    H = Interaction(terms, GAS, ABSOLUTE)
    back = spin_to_gas(gas_to_spin(H))
    worst = max(abs(back.terms.get(k, 0.0) - v) for k, v in terms.items())
    extras = max((abs(v) for k, v in back.terms.items() if k not in terms),
                 default=0.0)
    assert max(worst, extras) <= 1e-12


def test_evaluation_consistency_across_bases():
    rng = np.random.default_rng(3)
    sites = ((0, 0), (1, 0), (0, 1), (1, 1))
    H = Interaction({S: rng.normal() for S in _subsets(sites)}, GAS, ABSOLUTE)
    d = gas_to_spin(H)
    for cfg in _subsets(sites):
        spin_value = sum(
            v * np.prod([-1.0 if s in cfg else 1.0 for s in Y])
            for Y, v in d.terms.items())
        assert abs(evaluate(H, cfg) - spin_value) < 1e-12


def test_interaction_drops_exact_zeros_only():
    H = Interaction({A: 0.0, B: 1e-300}, GAS, ABSOLUTE)
    assert A not in H.terms
    assert H.terms[B] == 1e-300


def test_free_energy_table_canonicalizes_lookups():
    table = FreeEnergyTable({AB: 2.5})
    far = ((7, -3), (8, -3))
    assert table.get_exact(far) == 2.5
    assert mobius_invert(table, A) if A in table.values else True


def test_free_energy_table_rejects_empty_key():
    with pytest.raises(ValueError):
        FreeEnergyTable({(): 1.0})


def test_table_csv_round_trip_bit_exact():
    values = {A: 1 / 3, AB: -2.0000000000000004, ((0, 0), (2, 1)): 1e-17}
    meta = {"L": "4", "C_B": "8", "beta": repr(0.44068679350977147)}
    text = table_to_csv(FreeEnergyTable(values, meta))
    back = table_from_csv(text)
    assert back.values == values
    assert back.meta["L"] == "4"
    assert table_to_csv(back) == text


def test_write_read_table_streams():
    buf = io.StringIO()
    write_table(buf, {A: 1.25}, {"k": "v"})
    got, meta = read_table(io.StringIO(buf.getvalue()))
    assert got == {A: 1.25}
    assert meta == {"k": "v"}
    assert "set,value" in buf.getvalue()


@given(st.dictionaries(
    st.sets(st.tuples(st.integers(-3, 3), st.integers(-3, 3)),
            min_size=1, max_size=3).map(lambda s: tuple(sorted(s))),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    min_size=1, max_size=12))
@settings(max_examples=60)
def test_table_csv_round_trip_random(values):
    table = FreeEnergyTable(values)     # keys collapse to canonical translates
    text = table_to_csv(table)
    assert table_from_csv(text).values == table.values
