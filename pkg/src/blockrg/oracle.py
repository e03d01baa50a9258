"""Ground truth for small volumes: exhaustive enumeration and Monte Carlo.

Both paths compute the same constrained partition sum as the engine, without
any sweep or truncation machinery, so they validate it independently.  The
exhaustive sum is exact up to rounding for volumes of at most 28 spins; the
Metropolis estimate comes with standard errors and a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .engine import Volume
from .lattice import site_set
from .model import Coupling, kernel_weight

MAX_EXACT_SPINS = 28
_CHUNK_BITS = 20

_KW = np.array(
    [[kernel_weight(v, k) for k in range(5)] for v in (0, 1)], dtype=np.float64
)


def _volume_arrays(volume: Volume):
    sites = sorted(volume.sites)
    pos = {s: k for k, s in enumerate(sites)}
    edges = []
    for s in sites:
        x, y = s
        for t in ((x + 1, y), (x, y + 1)):
            if t in pos:
                edges.append((pos[s], pos[t]))
    blocks = np.array(
        [[pos[(2 * i + dx, 2 * j + dy)] for dx in (0, 1) for dy in (0, 1)]
         for i, j in volume.blocks],
        dtype=np.int64,
    )
    eu = np.array([u for u, _ in edges], dtype=np.int64)
    ev = np.array([v for _, v in edges], dtype=np.int64)
    return sites, eu, ev, blocks


def exact_Hbar(block_config, volume: Volume, coupling: Coupling) -> float:
    """-log sum over all spin configurations of kernel weight times exp(-H).

    Free boundaries, identical conventions to the engine.  The sum runs over
    2^n configurations in fixed-size chunks accumulated in a fixed order, so
    the result does not depend on how the work is split.
    """
    n = volume.n_spins
    if n > MAX_EXACT_SPINS:
        raise ValueError(f"{n} spins is beyond the exhaustive-enumeration guard")
    config = frozenset(site_set(block_config))
    if not config <= set(volume.blocks):
        raise ValueError("block configuration must lie inside the volume")

    sites, eu, ev, blocks = _volume_arrays(volume)
    beta = coupling.beta
    bvals = np.array([1 if index in config else 0 for index in volume.blocks])

    shifts = np.arange(n, dtype=np.uint64)
    total = 0.0
    chunk = 1 << min(_CHUNK_BITS, n)
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, start + chunk, dtype=np.uint64)
        occ = ((idx[:, None] >> shifts) & 1).astype(np.int8)
        spin = 1 - 2 * occ  # sigma = +-1
        # -H = beta * sum over bonds of sigma_u sigma_v
        exponent = beta * (spin[:, eu] * spin[:, ev]).sum(axis=1, dtype=np.float64)
        weight = np.exp(exponent)
        for b in range(blocks.shape[0]):
            k = occ[:, blocks[b]].sum(axis=1)
            weight *= _KW[bvals[b], k]
        total += float(weight.sum())
    if not (total > 0.0 and math.isfinite(total)):
        raise ValueError(f"degenerate partition sum {total}")
    return -math.log(total)


def exact_f(block_config, volume: Volume, coupling: Coupling) -> float:
    """Exhaustive f(X): Hbar at the given configuration minus Hbar at all-zero."""
    return exact_Hbar(block_config, volume, coupling) - exact_Hbar((), volume, coupling)


@njit(cache=False)
def _mc_chain(occ, neigh, ndeg, spin_block, frozen, block_count, kw,
              window_blocks, window_vals, beta, sweeps, burn, tallies, uniforms):
    n = occ.shape[0]
    nwin = window_blocks.shape[0]
    ncfg = window_vals.shape[0]
    u = 0
    for sweep in range(sweeps + burn):
        for s in range(n):
            b = spin_block[s]
            k = block_count[b]
            newk = k - 1 if occ[s] == 1 else k + 1
            ratio = 1.0
            if frozen[b] == 1:
                t_old = kw[0, k]
                t_new = kw[0, newk]
                if t_new == 0.0:
                    u += 1
                    continue
                ratio = t_new / t_old
            # flipping sigma_s changes -H by -2*beta*sigma_s*sum of neighbors
            acc = 0
            for d in range(ndeg[s]):
                t = neigh[s, d]
                acc += (1 - 2 * occ[t])
            delta = -2.0 * beta * (1 - 2 * occ[s]) * acc
            ratio *= math.exp(delta)
            if uniforms[u] < ratio:
                occ[s] = 1 - occ[s]
                block_count[b] = newk
            u += 1
        if sweep >= burn:
            rec = sweep - burn
            for c in range(ncfg):
                w = 1.0
                for wb in range(nwin):
                    w *= kw[window_vals[c, wb], block_count[window_blocks[wb]]]
                tallies[c, rec] = w
    return u


@dataclass
class MonteCarloResult:
    """f estimates for the sub-configurations of X, with standard errors."""

    estimates: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    missing: list = field(default_factory=list)
    samples: int = 0
    seed: int = 0


def metropolis_f(X, window, volume: Volume, coupling: Coupling,
                 samples: int, seed: int, chains: int = 1,
                 burn_in: int | None = None, batches: int = 32) -> MonteCarloResult:
    """Monte Carlo estimate of f(Y) for every nonempty Y inside X.

    Single-spin-flip Metropolis on the original spins.  Blocks outside
    `window` contribute their all-zero kernel weight to the stationary
    distribution; the blocks of the window are unconstrained, and each
    recorded sweep tallies the kernel weight of every window assignment that
    is 1 on some Y inside X and 0 on the rest of the window.  f(Y) is minus
    the log of the tally ratio against the all-zero assignment.  One sample
    is one full lattice sweep.  Fixed seed gives fixed output.
    """
    X = site_set(X)
    window = tuple(sorted({(int(i), int(j)) for i, j in window}))
    if not set(X) <= set(window):
        raise ValueError("X must be contained in the window blocks")
    if not set(window) <= set(volume.blocks):
        raise ValueError("window blocks must lie inside the volume")
    if samples < batches:
        raise ValueError("need at least one sample per batch")
    if burn_in is None:
        burn_in = max(100, samples // 10)

    sites, eu, ev, blocks = _volume_arrays(volume)
    n = len(sites)
    neigh = np.full((n, 4), -1, dtype=np.int64)
    ndeg = np.zeros(n, dtype=np.int64)
    for u, v in zip(eu, ev):
        neigh[u, ndeg[u]] = v
        ndeg[u] += 1
        neigh[v, ndeg[v]] = u
        ndeg[v] += 1

    spin_block = np.zeros(n, dtype=np.int64)
    for b in range(blocks.shape[0]):
        for s in blocks[b]:
            spin_block[s] = b
    windex = {index: k for k, index in enumerate(volume.blocks)}
    frozen = np.ones(len(volume.blocks), dtype=np.int64)
    for index in window:
        frozen[windex[index]] = 0

    subsets = [tuple(X[i] for i in range(len(X)) if mask >> i & 1)
               for mask in range(1 << len(X))]
    window_blocks = np.array([windex[index] for index in window], dtype=np.int64)
    window_vals = np.array(
        [[1 if index in sub else 0 for index in window] for sub in subsets],
        dtype=np.int64,
    )

    seeds = np.random.SeedSequence(seed).generate_state(chains, dtype=np.uint64)
    per_cfg = np.zeros((len(subsets), chains), dtype=np.float64)
    batch_f = np.zeros((len(subsets), chains * batches), dtype=np.float64)
    batch_ok = np.ones(chains * batches, dtype=bool)
    for c in range(chains):
        rng = np.random.default_rng(seeds[c])
        occ = np.zeros(n, dtype=np.int64)
        block_count = np.zeros(len(volume.blocks), dtype=np.int64)
        tallies = np.zeros((len(subsets), samples), dtype=np.float64)
        uniforms = rng.random((samples + burn_in) * n)
        _mc_chain(occ, neigh, ndeg, spin_block, frozen, block_count, _KW,
                  window_blocks, window_vals, coupling.beta, samples, burn_in,
                  tallies, uniforms)
        per_cfg[:, c] = tallies.mean(axis=1)
        edges_split = np.array_split(np.arange(samples), batches)
        for bidx, piece in enumerate(edges_split):
            col = c * batches + bidx
            w0 = tallies[0, piece].mean()
            if w0 <= 0.0:
                batch_ok[col] = False
                continue
            for k in range(len(subsets)):
                wk = tallies[k, piece].mean()
                batch_f[k, col] = -math.log(wk / w0) if wk > 0.0 else np.nan

    result = MonteCarloResult(samples=samples, seed=seed)
    w_empty = per_cfg[0].mean()
    for k, sub in enumerate(subsets):
        if not sub:
            continue
        w = per_cfg[k].mean()
        series = batch_f[k, batch_ok]
        if w <= 0.0 or w_empty <= 0.0 or np.isnan(series).any():
            result.missing.append(sub)
            continue
        result.estimates[sub] = -math.log(w / w_empty)
        result.errors[sub] = float(series.std(ddof=1) / math.sqrt(len(series)))
    return result
