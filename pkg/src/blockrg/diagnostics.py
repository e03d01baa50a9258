"""Quantitative error analyses over coefficient and free-energy tables.

Everything here reads tables produced elsewhere and reduces them to the
numbers worth watching: how fast coefficients decay, how much weight sits
past a truncation rank, how badly a finite sweep volume breaks the dihedral
symmetry, how much values move with the volume, and how the whole table
converges as the truncation cutoff grows.  Functions are pure; partial
input (incomplete orbits, mismatched key sets) is skipped and logged, never
zero-filled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .interaction import (FreeEnergyTable, Interaction, MissingFreeEnergyError,
                          mobius_invert)
from .lattice import Sites, canonical_dihedral, dihedral_orbit, format_sites

log = logging.getLogger(__name__)


def _class_values(table) -> dict[Sites, float]:
    """Per-translation-class values from a table or interaction."""
    if isinstance(table, FreeEnergyTable):
        return dict(table.values)
    if isinstance(table, Interaction):
        return dict(table.terms)
    raise TypeError(f"expected a table or interaction, got {type(table).__name__}")


# ---------------------------------------------------------------------------
# decay of coefficient magnitudes

@dataclass
class DecayReport:
    """Classes ordered by decreasing coefficient magnitude, with tail sums.

    tails[n] is the total magnitude at rank n and beyond, accumulated from
    the far end so that tails[n] - tails[n+1] recovers each magnitude
    exactly.
    """

    ordered: list = field(default_factory=list)   # (class, magnitude) pairs
    tails: list = field(default_factory=list)
    mode: str = "translation"


def decay_report(c_table, mode: str = "translation") -> DecayReport:
    """Order classes by decreasing |c|; ties fall back to the lexicographically
    smaller canonical set.

    In dihedral mode the table first collapses to one entry per dihedral
    class, valued at the average of its translation classes' coefficients.
    """
    values = _class_values(c_table)
    if not values:
        raise ValueError("cannot rank an empty table")
    if mode == "dihedral":
        groups: dict[Sites, list[float]] = {}
        for sites, v in values.items():
            groups.setdefault(canonical_dihedral(sites), []).append(v)
        values = {rep: sum(vs) / len(vs) for rep, vs in groups.items()}
    elif mode != "translation":
        raise ValueError(f"unknown decay mode {mode!r}")

    ordered = sorted(((sites, abs(v)) for sites, v in values.items()),
                     key=lambda item: (-item[1], item[0]))
    tails = [0.0] * len(ordered)
    running = 0.0
    for i in range(len(ordered) - 1, -1, -1):
        running = tails[i] = running + ordered[i][1]
    return DecayReport(ordered=ordered, tails=tails, mode=mode)


def threshold_counts(report: DecayReport, thresholds) -> list[int]:
    """How many ranked classes exceed each threshold in magnitude."""
    counts = []
    for t in thresholds:
        if t <= 0:
            raise ValueError("thresholds must be positive")
        counts.append(sum(1 for _, mag in report.ordered if mag > t))
    return counts


def norm_tail(c_table) -> float:
    """Weight of the interaction around a fixed site: sum of |c(Y)| * |Y|.

    A translation class of cardinality |Y| has exactly |Y| translates
    through any given site, so this is the per-site interaction norm.
    """
    return sum(abs(v) * len(sites) for sites, v in _class_values(c_table).items())


# ---------------------------------------------------------------------------
# symmetry and volume errors

def dihedral_error(table) -> float:
    """Mean |v(Y) - orbit average| over translation classes with full orbits.

    The sweep volume is a square, so in exact arithmetic every dihedral
    image of a class would come out equal; the residual spread measures the
    symmetry breaking introduced by truncation.  Classes whose orbit is not
    fully present are skipped and counted in a single log line.
    """
    values = _class_values(table)
    total = 0.0
    used = 0
    skipped = 0
    done: set[Sites] = set()
    for sites in values:
        rep = canonical_dihedral(sites)
        if rep in done:
            continue
        done.add(rep)
        orbit = dihedral_orbit(sites)
        member_values = [values[m] for m in orbit if m in values]
        if len(member_values) < len(orbit):
            skipped += len(member_values)
            continue
        mean = sum(member_values) / len(orbit)
        for v in member_values:
            total += abs(v - mean)
        used += len(orbit)
    if skipped:
        log.warning("dihedral error skipped %d entries with incomplete orbits",
                    skipped)
    if used == 0:
        raise ValueError("no complete dihedral orbit in the table")
    return total / used


def finite_volume_error(table_a, table_b) -> float:
    """Mean |difference| over the keys two tables share."""
    va = _class_values(table_a)
    vb = _class_values(table_b)
    common = va.keys() & vb.keys()
    if len(common) < max(len(va), len(vb)):
        log.warning("finite-volume error restricted to %d of %d/%d keys",
                    len(common), len(va), len(vb))
    if not common:
        raise ValueError("the tables share no keys")
    return sum(abs(va[k] - vb[k]) for k in common) / len(common)


# ---------------------------------------------------------------------------
# convergence in the truncation cutoff

def _invert_all(values: dict[Sites, float]) -> tuple[dict[Sites, float], int]:
    """Gas coefficients for every key whose subset classes are all present."""
    table = FreeEnergyTable(dict(values))
    out: dict[Sites, float] = {}
    missing = 0
    for sites in values:
        try:
            out[sites] = mobius_invert(table, sites)
        except MissingFreeEnergyError:
            missing += 1
    return out, missing


def _orbit_average(values: dict[Sites, float]) -> dict[Sites, float]:
    """Map each class to its orbit mean; classes with partial orbits are
    dropped."""
    out: dict[Sites, float] = {}
    for sites in values:
        orbit = dihedral_orbit(sites)
        if all(m in values for m in orbit):
            mean = sum(values[m] for m in orbit) / len(orbit)
            out[sites] = mean
    return out


def convergence_metrics(tables: dict, reference=None) -> dict:
    """Distance of each table from the best-converged one, four ways.

    `tables` maps a truncation cutoff to its FreeEnergyTable; `reference`
    names the cutoff to measure against (largest by default).  For every
    cutoff the result holds the mean absolute difference of f, of the
    dihedral-averaged f, of the inverted gas coefficients c, and of the
    dihedral-averaged c, in that order.
    """
    if not tables:
        raise ValueError("no tables to compare")
    cutoffs = sorted(tables)
    ref_cut = cutoffs[-1] if reference is None else reference
    if ref_cut not in tables:
        raise ValueError(f"reference cutoff {ref_cut!r} not among the tables")

    values = {c: _class_values(tables[c]) for c in cutoffs}
    common = set(values[ref_cut])
    for c in cutoffs:
        common &= set(values[c])
    dropped = len(values[ref_cut]) - len(common)
    if dropped:
        log.warning("convergence metrics restricted to %d shared keys "
                    "(%d dropped)", len(common), dropped)
    if not common:
        raise ValueError("the tables share no keys")

    trimmed = {c: {k: values[c][k] for k in common} for c in cutoffs}
    ref_f = trimmed[ref_cut]
    ref_fbar = _orbit_average(ref_f)
    ref_c, ref_c_missing = _invert_all(ref_f)
    if ref_c_missing:
        log.warning("gas inversion unavailable for %d of %d reference keys",
                    ref_c_missing, len(common))
    ref_cbar = _orbit_average(ref_c)

    def mean_gap(cur: dict, ref: dict) -> float:
        keys = cur.keys() & ref.keys()
        if not keys:
            return float("nan")
        return sum(abs(cur[k] - ref[k]) for k in keys) / len(keys)

    out = {}
    for c in cutoffs:
        cur_f = trimmed[c]
        cur_c, _ = _invert_all(cur_f)
        out[c] = (mean_gap(cur_f, ref_f),
                  mean_gap(_orbit_average(cur_f), ref_fbar),
                  mean_gap(cur_c, ref_c),
                  mean_gap(_orbit_average(cur_c), ref_cbar))
    return out


# ---------------------------------------------------------------------------
# plot-ready CSV output

def write_decay_csv(stream, report: DecayReport, meta: dict | None = None):
    """Rank, magnitude and tail per line; rank is 1-based like the plots."""
    full = {"mode": report.mode, "ties": "lexicographic"}
    full.update(meta or {})
    for k in sorted(full):
        stream.write(f"# {k}={full[k]}\n")
    stream.write("n,magnitude,tail\n")
    for i, (sites, mag) in enumerate(report.ordered):
        stream.write(f"{i + 1},{mag:.17g},{report.tails[i]:.17g}\n")


def write_series_csv(stream, columns: tuple, rows, meta: dict | None = None):
    """Two-column series such as (C_B, value) or (L, value)."""
    for k in sorted(meta or {}):
        stream.write(f"# {k}={meta[k]}\n")
    stream.write(f"{columns[0]},{columns[1]}\n")
    for x, v in rows:
        stream.write(f"{x:g},{v:.17g}\n")


def write_convergence_csv(stream, metrics: dict, meta: dict | None = None):
    for k in sorted(meta or {}):
        stream.write(f"# {k}={meta[k]}\n")
    stream.write("C_B,f_err,fbar_err,c_err,cbar_err\n")
    for cutoff in sorted(metrics):
        a, b, c, d = metrics[cutoff]
        stream.write(f"{cutoff:g},{a:.17g},{b:.17g},{c:.17g},{d:.17g}\n")
