"""Finite-volume block summation of the majority-rule RG map.

The renormalized Hamiltonian of a block configuration is minus the log of a
constrained partition sum: each 2x2 block carries the majority kernel for its
assigned block value, and the original spins are summed out one block at a
time in sweep order.  Between block summations the not-yet-summed spins
bordering the summed territory carry an effective interaction; a truncation
policy decides which of its terms survive.  With the truncation disabled the
sweep reproduces the exhaustive sum exactly, which is what the oracle tests
check.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import isqrt

import numpy as np

from .interaction import ABSOLUTE, GAS, FreeEnergyTable, Interaction
from .lattice import (Site, Sites, canonical_translate, format_sites,
                      site_set, spread_num)
from .model import Coupling, kernel_weight

log = logging.getLogger(__name__)

ENGINE_TAG = "blockrg-0.1.0"

# hard ceiling on the boundary size a no-truncation run may reach; beyond
# this the full subset family does not fit in memory anyway
_MAX_FREE_BOUNDARY = 22


class EngineError(RuntimeError):
    """A block summation could not be carried out."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Which boundary terms survive a block summation.

    A term on the site set X is kept when spread(X) <= cutoff and, if
    max_cardinality is set, |X| <= max_cardinality.  Coefficients smaller in
    magnitude than `prune` are dropped outright.
    """

    cutoff: float
    max_cardinality: int | None = None
    prune: float = 1e-14

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError("cutoff must be nonnegative")
        if self.max_cardinality is not None and self.max_cardinality < 1:
            raise ValueError("max_cardinality must be positive")
        if self.prune < 0:
            raise ValueError("prune threshold must be nonnegative")

    @classmethod
    def none(cls) -> "TruncationPolicy":
        """Keep every boundary term exactly (small volumes only)."""
        return cls(cutoff=math.inf, prune=0.0)

    @property
    def truncating(self) -> bool:
        return math.isfinite(self.cutoff) or self.max_cardinality is not None

    def admits(self, sites) -> bool:
        if self.max_cardinality is not None and len(sites) > self.max_cardinality:
            return False
        if not math.isfinite(self.cutoff):
            return True
        num, n = spread_num(sites)
        return num <= self.cutoff * n


@dataclass(frozen=True)
class Volume:
    """A finite set of 2x2 blocks, addressed by block index."""

    blocks: tuple[tuple[int, int], ...]
    half_width: int | None = None

    @classmethod
    def square(cls, half_width: int) -> "Volume":
        """The (2L+1) x (2L+1) block square centered on the origin block."""
        if half_width < 0:
            raise ValueError("half_width must be nonnegative")
        r = range(-half_width, half_width + 1)
        return cls(tuple(sorted((i, j) for j in r for i in r)), half_width)

    @classmethod
    def from_blocks(cls, indices) -> "Volume":
        blocks = tuple(sorted({(int(i), int(j)) for i, j in indices}))
        if not blocks:
            raise ValueError("a volume needs at least one block")
        return cls(blocks)

    @cached_property
    def sites(self) -> frozenset:
        out = set()
        for i, j in self.blocks:
            out.update(((2 * i, 2 * j), (2 * i + 1, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j + 1)))
        return frozenset(out)

    @property
    def n_spins(self) -> int:
        return 4 * len(self.blocks)

    @cached_property
    def bounds(self) -> tuple[int, int, int, int]:
        """(imin, imax, jmin, jmax) over block indices."""
        return (
            min(i for i, _ in self.blocks),
            max(i for i, _ in self.blocks),
            min(j for _, j in self.blocks),
            max(j for _, j in self.blocks),
        )


@dataclass
class EngineState:
    """Mid-sweep snapshot: boundary interaction, log-weight so far, position."""

    boundary: Interaction
    accumulator: float
    cursor: int
    block_config: frozenset


def _block_sites(index: tuple[int, int]) -> Sites:
    i, j = index
    return ((2 * i, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j), (2 * i + 1, 2 * j + 1))


# ---------------------------------------------------------------------------
# truncation collection

def _staircase_sites(cutoff: float) -> list[Site]:
    # boundary of a row-major sweep, relative to the current block at
    # {0,1}^2: the exposed row above the summed part of the current row and
    # the not-yet-summed remainder of the row below, clipped to the largest
    # pairwise distance sqrt(2*cutoff) an admissible set can span
    reach = isqrt(int(2 * cutoff)) + 1
    block = [(0, 0), (1, 0), (0, 1), (1, 1)]
    left = [(x, 2) for x in range(-1, -reach - 1, -1)]
    right = [(x, 0) for x in range(2, reach + 2)]
    return block + left + right


def block_collection(block_index: tuple[int, int], policy: TruncationPolicy) -> list[Sites]:
    """All boundary site sets meeting the given block that the policy admits.

    Enumerated once relative to the origin block and translated; depth-first
    order over a fixed site ordering, so the output is deterministic.
    """
    rel = _collection_origin(policy.cutoff, policy.max_cardinality)
    i, j = block_index
    if i == 0 and j == 0:
        return list(rel)
    dx, dy = 2 * i, 2 * j
    return [tuple((x + dx, y + dy) for x, y in sites) for sites in rel]


def block_collection_size(policy: TruncationPolicy) -> int:
    """len(block_collection(...)) without materializing the sets."""
    return _collection_walk(policy.cutoff, policy.max_cardinality, collect=None)


@lru_cache(maxsize=8)
def _collection_origin(cutoff: float, max_cardinality) -> tuple[Sites, ...]:
    out: list[Sites] = []
    _collection_walk(cutoff, max_cardinality, collect=out)
    return tuple(out)


def _collection_walk(cutoff: float, max_cardinality, collect) -> int:
    if not math.isfinite(cutoff):
        raise EngineError("the unbounded collection is infinite; give a finite cutoff")
    sites = _staircase_sites(cutoff)
    n = len(sites)
    cap = max_cardinality if max_cardinality is not None else n
    count = 0
    # every admissible set contains one of the four block sites, which come
    # first in the site order, so each set's lowest index is a block site
    stack = [(k, [sites[k]], 1, sites[k][0], sites[k][1], sites[k][0] ** 2 + sites[k][1] ** 2)
             for k in range(3, -1, -1)]
    while stack:
        idx, chosen, m, sx, sy, sq = stack.pop()
        count += 1
        if collect is not None:
            collect.append(tuple(sorted(chosen)))
        if m >= cap:
            continue
        for k in range(n - 1, idx, -1):
            x, y = sites[k]
            m2, sx2, sy2 = m + 1, sx + x, sy + y
            sq2 = sq + x * x + y * y
            if m2 * sq2 - sx2 * sx2 - sy2 * sy2 <= cutoff * m2:
                stack.append((k, chosen + [sites[k]], m2, sx2, sy2, sq2))
    return count


# ---------------------------------------------------------------------------
# subset families over the active boundary

@lru_cache(maxsize=None)
def _family(rel_sites: Sites, cutoff: float, max_cardinality) -> tuple:
    """Admissible subsets of a site pattern, with transform gather arrays.

    Returns (index_of_mask, member_tuples, with_bit, without_bit) where the
    family is ordered with the empty set first, member_tuples[k] is the sorted
    site tuple of family member k (relative coordinates), and with_bit[b] /
    without_bit[b] are index arrays realizing the per-bit subset-sum passes.
    """
    m = len(rel_sites)
    cap = max_cardinality if max_cardinality is not None else m
    masks: list[int] = [0]
    if not math.isfinite(cutoff):
        if m > _MAX_FREE_BOUNDARY:
            raise EngineError(
                f"boundary of {m} sites is too large for a no-truncation run; set a cutoff"
            )
        masks = list(range(1 << m))
    else:
        stack = [(k, 1 << k, 1, rel_sites[k][0], rel_sites[k][1],
                  rel_sites[k][0] ** 2 + rel_sites[k][1] ** 2) for k in range(m - 1, -1, -1)]
        while stack:
            idx, mask, nm, sx, sy, sq = stack.pop()
            masks.append(mask)
            if nm >= cap:
                continue
            for k in range(idx + 1, m):
                x, y = rel_sites[k]
                nm2, sx2, sy2 = nm + 1, sx + x, sy + y
                sq2 = sq + x * x + y * y
                if nm2 * sq2 - sx2 * sx2 - sy2 * sy2 <= cutoff * nm2:
                    stack.append((k, mask | 1 << k, nm2, sx2, sy2, sq2))
        masks.sort()
    index = {mask: k for k, mask in enumerate(masks)}
    members = tuple(
        tuple(rel_sites[b] for b in range(m) if mask >> b & 1) for mask in masks
    )
    with_bit = []
    without_bit = []
    for b in range(m):
        wi = [k for k, mask in enumerate(masks) if mask >> b & 1]
        with_bit.append(np.array(wi, dtype=np.intp))
        without_bit.append(np.array([index[masks[k] ^ 1 << b] for k in wi], dtype=np.intp))
    return index, members, tuple(with_bit), tuple(without_bit)


# kernel weight per block value and 4-bit occupation mask, and the masks of
# nonzero weight
_KW = tuple(
    np.array([kernel_weight(v, c.bit_count()) for c in range(16)]) for v in (0, 1)
)
_KEEP = tuple(np.flatnonzero(_KW[v]) for v in (0, 1))
_KVAL = tuple(_KW[v][_KEEP[v]][:, None] for v in (0, 1))

# gather indices for the subset-sum pass over the four in-block bits
_BLOCK_HI = tuple(np.array([c for c in range(16) if c >> b & 1], dtype=np.intp)
                  for b in range(4))
_BLOCK_LO = tuple(np.array([c ^ 1 << b for c in range(16) if c >> b & 1], dtype=np.intp)
                  for b in range(4))


def _advance(boundary: dict, accumulator: float, pos: int, run: "_Run",
             occupied: frozenset, policy: TruncationPolicy) -> tuple[dict, float]:
    """Sum out one block: fold the boundary terms meeting it plus the fresh
    Hamiltonian terms into the 16-configuration block sum, then rebuild the
    boundary from the log-weight differences."""
    index = run.sweep[pos]
    bset, bbit = run.block_lookup[pos]

    passthrough: dict[Sites, float] = {}
    participating: list[tuple[Sites, float]] = []
    keep = participating.append
    disjoint = bset.isdisjoint
    for sites, coeff in boundary.items():
        if disjoint(sites):
            passthrough[sites] = coeff
        else:
            keep((sites, coeff))
    participating.extend(run.h_terms[pos])

    touched: set = set()
    for sites, _ in participating:
        touched.update(sites)
    touched -= bset
    outside = sorted(touched)
    m = len(outside)
    if outside:
        offx = min(x for x, _ in outside)
        offy = min(y for _, y in outside)
    else:
        offx = offy = 0
    rel = tuple((x - offx, y - offy) for x, y in outside)
    obit = {s: 1 << k for k, s in enumerate(outside)}

    index_of, members, with_bit, without_bit = _family(rel, policy.cutoff, policy.max_cardinality)
    nfam = len(members)

    flat: list[int] = []
    vals: list[float] = []
    bbit_get = bbit.get
    omask = obit.__getitem__
    col_of = index_of.get
    add_flat = flat.append
    add_val = vals.append
    for sites, coeff in participating:
        p = 0
        q = 0
        for s in sites:
            b = bbit_get(s)
            if b is None:
                q |= omask(s)
            else:
                p |= b
        col = col_of(q)
        if col is None:
            raise EngineError("boundary term escaped the truncation family")
        add_flat(p * nfam + col)
        add_val(coeff)

    if vals:
        work = np.bincount(flat, weights=vals, minlength=16 * nfam).reshape(16, nfam)
    else:
        work = np.zeros((16, nfam))
    # each term applies whenever its in-block pattern is occupied: subset-sum
    # over the four block bits, then over the outside bits
    for b in range(4):
        work[_BLOCK_HI[b]] += work[_BLOCK_LO[b]]
    for b in range(m):
        work[:, with_bit[b]] += work[:, without_bit[b]]

    v = 1 if index in occupied else 0
    sub = work[_KEEP[v]]
    peak = sub.max(axis=0)
    logw = peak + np.log((_KVAL[v] * np.exp(sub - peak)).sum(axis=0))
    if not np.all(np.isfinite(logw)):
        raise EngineError(f"non-finite block weight at block {index}")
    for b in range(m):
        logw[with_bit[b]] -= logw[without_bit[b]]

    values = logw.tolist()
    accumulator += values[0]
    prune = policy.prune
    out = passthrough
    out_get = out.get
    for k in range(1, nfam):
        val = values[k]
        if -prune < val < prune or val == 0.0:
            continue
        key = tuple((x + offx, y + offy) for x, y in members[k])
        cur = out_get(key)
        if cur is None:
            out[key] = val
        else:
            cur += val
            if -prune < cur < prune or cur == 0.0:
                del out[key]
            else:
                out[key] = cur
    return out, accumulator


# ---------------------------------------------------------------------------
# sweep preparation

class _Run:
    """Sweep order and per-block entry terms for one (volume, coupling)."""

    def __init__(self, volume: Volume, coupling: Coupling, sweep: str):
        if sweep == "row":
            order = sorted(volume.blocks, key=lambda ij: (ij[1], ij[0]))
        elif sweep == "column":
            order = sorted(volume.blocks, key=lambda ij: (ij[0], ij[1]))
        else:
            raise ValueError(f"unknown sweep order {sweep!r}")
        self.sweep = order
        self.position = {index: k for k, index in enumerate(order)}
        self.block_lookup = []
        for index in order:
            bsites = _block_sites(index)
            self.block_lookup.append(
                (frozenset(bsites), {s: 1 << k for k, s in enumerate(bsites)}))

        sites = volume.sites
        beta = coupling.beta
        merged: dict[Sites, float] = {}
        n_edges = 0
        for s in sites:
            x, y = s
            for t in ((x + 1, y), (x, y + 1)):
                if t not in sites:
                    continue
                n_edges += 1
                # exponent of the Boltzmann weight is -H, so one bond
                # -beta*s_i*s_j contributes +beta, -2 beta n, +4 beta nn
                for key, val in (((s,), -2.0 * beta), ((t,), -2.0 * beta),
                                 (tuple(sorted((s, t))), 4.0 * beta)):
                    merged[key] = merged.get(key, 0.0) + val
        self.log_weight_const = beta * n_edges

        self.h_terms: list[list[tuple[Sites, float]]] = [[] for _ in order]
        pos = self.position
        from .model import block_of_site
        for key, val in sorted(merged.items()):
            if val == 0.0:
                continue
            entry = min(pos[block_of_site(s)] for s in key)
            self.h_terms[entry].append((key, val))


@lru_cache(maxsize=32)
def _prepared_run(volume: Volume, coupling: Coupling, sweep: str) -> _Run:
    return _Run(volume, coupling, sweep)


# ---------------------------------------------------------------------------
# public entry points

def initial_state(block_config, volume: Volume, coupling: Coupling,
                  sweep: str = "row") -> EngineState:
    """State before any block has been summed."""
    config = frozenset(site_set(block_config))
    if not config <= set(volume.blocks):
        raise ValueError("block configuration must lie inside the volume")
    run = _prepared_run(volume, coupling, sweep)
    return EngineState(
        boundary=Interaction({}, GAS, ABSOLUTE),
        accumulator=run.log_weight_const,
        cursor=0,
        block_config=config,
    )


def sum_block(state: EngineState, block_index: tuple[int, int], policy: TruncationPolicy,
              volume: Volume, coupling: Coupling, sweep: str = "row") -> EngineState:
    """Sum out one block and return the advanced state."""
    run = _prepared_run(volume, coupling, sweep)
    if state.cursor >= len(run.sweep) or run.sweep[state.cursor] != tuple(block_index):
        raise ValueError(
            f"cursor is at {run.sweep[state.cursor] if state.cursor < len(run.sweep) else 'end'}, "
            f"not {tuple(block_index)}"
        )
    boundary, acc = _advance(dict(state.boundary.terms), state.accumulator,
                             state.cursor, run, state.block_config, policy)
    return EngineState(
        boundary=Interaction(boundary, GAS, ABSOLUTE),
        accumulator=acc,
        cursor=state.cursor + 1,
        block_config=state.block_config,
    )


def renormalized_hamiltonian(block_config, volume: Volume, policy: TruncationPolicy,
                             coupling: Coupling, sweep: str = "row") -> float:
    """H-bar of one block configuration on a finite volume.

    Equals -log of the kernel-constrained partition sum; exact when the
    policy does not truncate, approximate otherwise.
    """
    config = frozenset(site_set(block_config))
    if not config <= set(volume.blocks):
        raise ValueError("block configuration must lie inside the volume")
    run = _prepared_run(volume, coupling, sweep)
    boundary: dict[Sites, float] = {}
    acc = run.log_weight_const
    for pos in range(len(run.sweep)):
        boundary, acc = _advance(boundary, acc, pos, run, config, policy)
    if boundary:
        raise EngineError(f"{len(boundary)} boundary terms left after the final block")
    return -acc


def embed_in_volume(rep: Sites, volume: Volume) -> tuple[Sites, int]:
    """Translate a canonical block-index set to the middle of the volume.

    Returns the embedded set and its margin: the smallest distance, in
    blocks, from the embedded set to the edge of the volume's bounding box.
    """
    rep = site_set(rep)
    if not rep:
        return rep, min(volume.bounds[1] - volume.bounds[0], volume.bounds[3] - volume.bounds[2])
    imin, imax, jmin, jmax = volume.bounds
    ri = [i for i, _ in rep]
    rj = [j for _, j in rep]
    di = (imin + imax) // 2 - (min(ri) + max(ri)) // 2
    dj = (jmin + jmax) // 2 - (min(rj) + max(rj)) // 2
    moved = tuple(sorted((i + di, j + dj) for i, j in rep))
    margin = min(
        min(i for i, _ in moved) - imin,
        imax - max(i for i, _ in moved),
        min(j for _, j in moved) - jmin,
        jmax - max(j for _, j in moved),
    )
    if margin < 0:
        raise ValueError(f"configuration {rep} does not fit in the volume")
    return moved, margin


class _SharedSweep:
    """The all-zero sweep with a state snapshot before every position.

    A run whose block configuration first differs from all-zero at sweep
    position p evolves identically up to p, so it can resume from the stored
    snapshot; the arithmetic is the same operations in the same order, which
    keeps batched results bit-identical to standalone runs.
    """

    def __init__(self, volume: Volume, policy: TruncationPolicy, coupling: Coupling,
                 sweep: str = "row"):
        self.volume = volume
        self.policy = policy
        self.coupling = coupling
        self.run = _prepared_run(volume, coupling, sweep)
        self.snapshots: list[tuple[dict, float]] = []
        boundary: dict[Sites, float] = {}
        acc = self.run.log_weight_const
        empty: frozenset = frozenset()
        for pos in range(len(self.run.sweep)):
            self.snapshots.append((boundary, acc))
            boundary, acc = _advance(boundary, acc, pos, self.run, empty, policy)
        if boundary:
            raise EngineError(f"{len(boundary)} boundary terms left after the final block")
        self.hbar_empty = -acc

    def hbar(self, config: frozenset) -> float:
        if not config:
            return self.hbar_empty
        start = min(self.run.position[index] for index in config)
        boundary, acc = self.snapshots[start]
        boundary = dict(boundary)
        for pos in range(start, len(self.run.sweep)):
            boundary, acc = _advance(boundary, acc, pos, self.run, config, self.policy)
        if boundary:
            raise EngineError(f"{len(boundary)} boundary terms left after the final block")
        return -acc


def _batch_chunk(reps, volume, policy, coupling, sweep):
    shared = _SharedSweep(volume, policy, coupling, sweep)
    out = []
    tight = 0
    tightest = None
    for rep in reps:
        try:
            started = time.perf_counter()
            moved, margin = embed_in_volume(rep, volume)
            if margin < 2:
                tight += 1
                tightest = margin if tightest is None else min(tightest, margin)
            value = shared.hbar(frozenset(moved)) - shared.hbar_empty
            out.append((rep, value))
            log.info("f(%s) = %.12g  [%.0f ms]", format_sites(rep), value,
                     1e3 * (time.perf_counter() - started))
        except (EngineError, ValueError) as exc:
            log.warning("skipping %s: %s", rep, exc)
    if tight:
        warnings.warn(
            f"{tight} of {len(reps)} configurations sit closer than 2 blocks to the "
            f"volume edge (closest margin {tightest}); enlarge the volume to be safe",
            stacklevel=2,
        )
    return out


def free_energy_batch(classes, volume: Volume, policy: TruncationPolicy, coupling: Coupling,
                      jobs: int = 1, existing: FreeEnergyTable | None = None,
                      sweep: str = "row") -> FreeEnergyTable:
    """Free energies of block-configuration classes relative to all-zero.

    `classes` may hold SymmetryClass values or plain site sets of block
    indices.  Entries already present in `existing` are skipped.  With
    jobs > 1 the classes are split across worker processes; the all-zero
    reference sweep is repeated per worker, and results are identical to a
    sequential run.
    """
    reps = []
    for cls in classes:
        rep = canonical_translate(site_set(getattr(cls, "representative", cls)))
        if not rep:
            continue
        if existing is not None and existing.get(rep) is not None:
            continue
        if rep not in reps:
            reps.append(rep)

    if jobs > 1 and len(reps) > 1:
        chunks = [reps[k::jobs] for k in range(jobs)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            futures = [pool.submit(_batch_chunk, c, volume, policy, coupling, sweep)
                       for c in chunks]
            results = [pair for fut in futures for pair in fut.result()]
    else:
        results = _batch_chunk(reps, volume, policy, coupling, sweep)

    values = {rep: f for rep, f in sorted(results)}
    meta = {
        "L": volume.half_width if volume.half_width is not None else f"blocks:{len(volume.blocks)}",
        "C_B": policy.cutoff,
        "max_cardinality": policy.max_cardinality,
        "beta": repr(coupling.beta),
        "engine": ENGINE_TAG,
        "sweep": sweep,
    }
    table = FreeEnergyTable(values, meta)
    if existing is not None:
        table = existing.merge(table)
        table.meta.update(meta)
    return table
