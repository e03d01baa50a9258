"""Interactions as coefficient tables on lattice sets, and free-energy tables.

A gas interaction stores H(n) = sum_Y c(Y) prod_{i in Y} n_i with n_i in {0,1};
a spin interaction stores H(s) = sum_Y d(Y) prod_{i in Y} s_i with s_i = 1-2n_i.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

from .lattice import (
    Sites,
    canonical_translate,
    format_sites,
    parse_sites,
    site_set,
    spread_key,
)

GAS = "gas"
SPIN = "spin"
ABSOLUTE = "absolute"
PER_CLASS = "per_translation_class"


class MissingFreeEnergyError(KeyError):
    """A Moebius inversion needed a free energy that is not in the table."""

    def __init__(self, sites: Sites):
        self.sites = sites
        super().__init__(f"free energy for {format_sites(sites)} is not available")


def _clean_terms(terms) -> dict[Sites, float]:
    out = {}
    for sites, value in terms.items():
        key = site_set(sites)
        v = float(value)
        if v != 0.0:
            out[key] = out.get(key, 0.0) + v
    return {k: v for k, v in out.items() if v != 0.0}


@dataclass
class Interaction:
    """Coefficient table keyed by site sets; zeros are never stored."""

    terms: dict[Sites, float]
    basis: str = GAS
    scope: str = ABSOLUTE

    def __post_init__(self):
        if self.basis not in (GAS, SPIN):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.scope not in (ABSOLUTE, PER_CLASS):
            raise ValueError(f"unknown scope {self.scope!r}")
        self.terms = _clean_terms(self.terms)

    def coefficient(self, sites) -> float:
        key = site_set(sites)
        if self.scope == PER_CLASS:
            key = canonical_translate(key)
        return self.terms.get(key, 0.0)

    def __add__(self, other: "Interaction") -> "Interaction":
        if self.basis != other.basis or self.scope != other.scope:
            raise ValueError("cannot mix bases or scopes in arithmetic")
        merged = dict(self.terms)
        for k, v in other.terms.items():
            merged[k] = merged.get(k, 0.0) + v
        return Interaction(merged, self.basis, self.scope)

    def scaled(self, factor: float) -> "Interaction":
        return Interaction({k: factor * v for k, v in self.terms.items()}, self.basis, self.scope)


def evaluate(H: Interaction, config) -> float:
    """Value of a gas interaction on the configuration that is 1 exactly on `config`."""
    if H.basis != GAS:
        raise ValueError("evaluate expects a gas-basis interaction")
    on = set(site_set(config))
    total = 0.0
    for sites, c in H.terms.items():
        if all(s in on for s in sites):
            total += c
    return total


def _nonempty_subsets(sites: Sites):
    n = len(sites)
    if n > 30:
        raise ValueError(f"set of {n} sites is too large for subset iteration")
    for mask in range(1, 1 << n):
        yield tuple(sites[i] for i in range(n) if mask >> i & 1), mask.bit_count()


def mobius_forward(c: Interaction, X) -> float:
    """f(X) = sum of c over nonempty subsets of X."""
    X = site_set(X)
    total = 0.0
    for sub, _ in _nonempty_subsets(X):
        total += c.coefficient(sub)
    return total


def mobius_invert(f, X) -> float:
    """Coefficient c(X) from free energies of the nonempty subsets of X.

    c(X) = sum_{0 != Y subset X} (-1)^{|X|-|Y|} f(Y).  `f` is anything with a
    get_exact(sites) lookup (a FreeEnergyTable), or a plain dict keyed by
    canonical translation classes.
    """
    X = site_set(X)
    if len(X) == 0:
        raise ValueError("c is only defined for nonempty sets")
    lookup = f.get_exact if hasattr(f, "get_exact") else lambda s: _dict_lookup(f, s)
    sign = len(X) & 1
    total = 0.0
    for sub, bits in _nonempty_subsets(X):
        term = lookup(sub)
        total += term if bits & 1 == sign else -term
    return total


def _dict_lookup(table: dict, sites: Sites) -> float:
    key = canonical_translate(sites)
    if key not in table:
        raise MissingFreeEnergyError(key)
    return table[key]


def gas_to_spin(H: Interaction) -> Interaction:
    """Exact change of variables n = (1-s)/2: d(Y) = (-1)^{|Y|} sum_{X >= Y} c(X) 2^{-|X|}."""
    if H.basis != GAS:
        raise ValueError("gas_to_spin expects a gas-basis interaction")
    out: dict[Sites, float] = {}
    for sites, c in H.terms.items():
        n = len(sites)
        w = c * 0.5**n
        for mask in range(1 << n):
            sub = tuple(sites[i] for i in range(n) if mask >> i & 1)
            sign = -1.0 if mask.bit_count() & 1 else 1.0
            out[sub] = out.get(sub, 0.0) + sign * w
    return Interaction(out, SPIN, H.scope)


def spin_to_gas(H: Interaction) -> Interaction:
    """Inverse of gas_to_spin via s = 1-2n."""
    if H.basis != SPIN:
        raise ValueError("spin_to_gas expects a spin-basis interaction")
    out: dict[Sites, float] = {}
    for sites, d in H.terms.items():
        n = len(sites)
        for mask in range(1 << n):
            sub = tuple(sites[i] for i in range(n) if mask >> i & 1)
            out[sub] = out.get(sub, 0.0) + d * (-2.0) ** mask.bit_count()
    return Interaction(out, GAS, H.scope)


def _sort_key(sites: Sites):
    return (spread_key(sites), len(sites), sites)


@dataclass
class FreeEnergyTable:
    """f(X) per translation class, with the run parameters that produced it.

    Keys are canonical translation representatives; the empty set is never a
    key (f is defined relative to the all-zero block configuration).
    """

    values: dict[Sites, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for sites, v in self.values.items():
            key = canonical_translate(site_set(sites))
            if key == ():
                raise ValueError("the empty set does not belong in a free-energy table")
            clean[key] = float(v)
        self.values = clean

    def get_exact(self, sites) -> float:
        key = canonical_translate(site_set(sites))
        if key not in self.values:
            raise MissingFreeEnergyError(key)
        return self.values[key]

    def get(self, sites, default=None):
        key = canonical_translate(site_set(sites))
        return self.values.get(key, default)

    def put(self, sites, value: float):
        key = canonical_translate(site_set(sites))
        if key == ():
            raise ValueError("the empty set does not belong in a free-energy table")
        self.values[key] = float(value)

    def sorted_keys(self) -> list[Sites]:
        return sorted(self.values, key=_sort_key)

    def merge(self, other: "FreeEnergyTable", tol: float = 1e-9) -> "FreeEnergyTable":
        """Union of two tables; shared keys must agree within tol."""
        merged = dict(self.values)
        for k, v in other.values.items():
            if k in merged and abs(merged[k] - v) > tol:
                raise ValueError(f"conflicting values for {format_sites(k)}: {merged[k]} vs {v}")
            merged[k] = v
        return FreeEnergyTable(merged, dict(self.meta))


def write_table(stream, values: dict[Sites, float], meta: dict):
    """CSV with leading '# key=value' metadata lines; 17 significant digits."""
    for k in sorted(meta):
        stream.write(f"# {k}={meta[k]}\n")
    stream.write("set,value\n")
    for sites in sorted(values, key=_sort_key):
        stream.write(f"{format_sites(sites)},{values[sites]:.17g}\n")


def read_table(stream) -> tuple[dict[Sites, float], dict]:
    meta = {}
    values: dict[Sites, float] = {}
    header_seen = False
    for line in stream:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if not header_seen:
            if line != "set,value":
                raise ValueError(f"expected 'set,value' header, got {line!r}")
            header_seen = True
            continue
        key_text, value_text = line.rsplit(",", 1)
        values[parse_sites(key_text)] = float(value_text)
    return values, meta


def table_to_csv(table: FreeEnergyTable) -> str:
    buf = io.StringIO()
    write_table(buf, table.values, table.meta)
    return buf.getvalue()


def table_from_csv(text: str) -> FreeEnergyTable:
    values, meta = read_table(io.StringIO(text))
    return FreeEnergyTable(values, meta)
