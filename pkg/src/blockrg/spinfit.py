"""Spin-basis coefficient extraction.

Renormalized free energies f(X) live in the lattice-gas basis.  The spin
representation writes the same Hamiltonian as a sum over translates of a
finite collection of site sets with one coefficient d(Y) per translation
class.  Two truncation schemes are provided:

* ``partially_exact`` converts gas coefficients directly; the resulting spin
  Hamiltonian reproduces f on every configuration whose excited set is a
  member of the fitted collection.
* ``uniformly_close`` instead minimizes the worst-case residual over a larger
  collection of configurations, a Chebyshev fit solved by a dense two-phase
  simplex with Bland's anti-cycling rule.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .interaction import FreeEnergyTable, Interaction, PER_CLASS, SPIN
from .lattice import Sites, canonical_translate, site_set

_ITERATION_CAP = 10 ** 6
_RC_TOL = 1e-9      # reduced-cost threshold for entering variables
_PIVOT_TOL = 1e-11  # smallest usable pivot element
_BLAND_AFTER = 50   # degenerate pivots in a row before the anti-cycling rule


class SimplexFailure(RuntimeError):
    """The solver gave up; the message carries phase and size diagnostics."""


# ---------------------------------------------------------------------------
# design matrix

def design_entry(X, Y) -> int:
    """-2 times the number of translates of Y with odd overlap against X.

    This is the change of sum_t prod_{s in Y+t} sigma(s) when the spins on X
    flip from +1 to -1: each translate with odd overlap flips its product
    from +1 to -1, contributing -2.  Only translates meeting X can have odd
    overlap, so the count is finite.
    """
    xs = site_set(X)
    ys = site_set(Y)
    if not xs or not ys:
        raise ValueError("design entries need nonempty sets")
    xset = set(xs)
    candidates = {(xa - ya, xb - yb) for xa, xb in xs for ya, yb in ys}
    odd = 0
    for tx, ty in candidates:
        hits = 0
        for a, b in ys:
            if (a + tx, b + ty) in xset:
                hits += 1
        if hits & 1:
            odd += 1
    return -2 * odd


@dataclass
class FitProblem:
    """A minimax fit: spin coefficients on Y_classes, residuals over X_classes.

    The fitted collection must be contained in the constraint collection; the
    fit only makes sense when there are more target configurations than
    coefficients to place.
    """

    Y_classes: list = field(default_factory=list)
    X_classes: list = field(default_factory=list)
    targets: FreeEnergyTable = field(default_factory=FreeEnergyTable)

    def __post_init__(self):
        self.Y_classes = [canonical_translate(site_set(Y)) for Y in self.Y_classes]
        self.X_classes = [canonical_translate(site_set(X)) for X in self.X_classes]
        if not self.Y_classes or not self.X_classes:
            raise ValueError("both collections need at least one class")
        if () in self.Y_classes or () in self.X_classes:
            raise ValueError("the empty set cannot be fitted")
        missing = set(self.Y_classes) - set(self.X_classes)
        if missing:
            raise ValueError(
                f"{len(missing)} fitted classes lie outside the constraint collection")

    def design(self) -> np.ndarray:
        rows = [[design_entry(X, Y) for Y in self.Y_classes] for X in self.X_classes]
        return np.asarray(rows, dtype=float)

    def target_vector(self) -> np.ndarray:
        return np.asarray([self.targets.get_exact(X) for X in self.X_classes])


# ---------------------------------------------------------------------------
# direct conversion from gas coefficients

def partially_exact(c_table: Interaction, Y_classes) -> Interaction:
    """Spin coefficients from gas coefficients, summed within the collection.

    d(Y) = (-1)^|Y| * sum over sets X with Y a subset of X and X a translate
    of a listed class, of c(X) / 2^|X|.  Truncating the sum to the listed
    collection keeps the spin Hamiltonian exact on configurations whose
    excited set belongs to the collection.
    """
    reps = [canonical_translate(site_set(Y)) for Y in Y_classes]
    terms: dict[Sites, float] = {}
    for Y in reps:
        total = 0.0
        y0 = Y[0]
        for X in reps:
            xset = set(X)
            # Y is a subset of X+t exactly when t lands y0 on some x in X
            # and carries the rest of Y inside as well
            count = 0
            for xa, xb in X:
                tx, ty = y0[0] - xa, y0[1] - xb
                if all((a - tx, b - ty) in xset for a, b in Y):
                    count += 1
            if count:
                total += count * c_table.coefficient(X) * 2.0 ** (-len(X))
        terms[Y] = -total if len(Y) % 2 else total
    return Interaction(terms, basis=SPIN, scope=PER_CLASS)


# ---------------------------------------------------------------------------
# dense two-phase simplex

def _standard_simplex(c: np.ndarray, A: np.ndarray, b: np.ndarray,
                      cap: int = _ITERATION_CAP, with_basis: bool = False):
    """min c.x subject to A x = b, x >= 0, with b >= 0 elementwise.

    Dense tableau, one artificial variable per row.  Pricing is steepest
    reduced cost; after a run of degenerate pivots it falls back to Bland's
    rule (lowest eligible index enters, lowest basic index leaves on ties),
    which cannot cycle, and returns to the faster rule once the objective
    moves again.  Returns (x, objective, y, iterations) where y holds the
    equality-row multipliers at the optimum.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if np.any(b < 0):
        raise ValueError("standard form needs a nonnegative right-hand side")

    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = np.arange(n, n + m)
    iters = 0

    def rebuild_objective(cost: np.ndarray):
        T[m, :] = 0.0
        T[m, :n + m] = cost
        for i in range(m):
            cb = cost[basis[i]]
            if cb != 0.0:
                T[m, :] -= cb * T[i, :]

    def run(cost: np.ndarray, phase: int):
        nonlocal iters
        rebuild_objective(cost)
        stalled = 0
        since_rebuild = 0
        while True:
            # reduced costs drift under repeated row operations; both programs
            # solved here are bounded, so a descent column without a positive
            # entry is numerical noise and gets blocked for this selection
            blocked = np.zeros(n, dtype=bool)
            while True:
                red = np.where(blocked, 0.0, T[m, :n])
                if stalled < _BLAND_AFTER:
                    enter = int(np.argmin(red))
                    if red[enter] >= -_RC_TOL:
                        enter = -1
                else:
                    eligible = red < -_RC_TOL
                    enter = int(np.argmax(eligible)) if eligible.any() else -1
                if enter < 0:
                    return
                col = T[:m, enter]
                open_rows = np.nonzero(col > _PIVOT_TOL)[0]
                if open_rows.size:
                    break
                blocked[enter] = True
            ratios = T[open_rows, -1] / col[open_rows]
            step = ratios.min()
            tied = open_rows[ratios <= step + 1e-12]
            leave = int(tied[np.argmin(basis[tied])])
            piv = T[leave, enter]
            T[leave, :] /= piv
            other = T[:, enter].copy()
            other[leave] = 0.0
            T[:, :] -= np.outer(other, T[leave, :])
            basis[leave] = enter
            stalled = 0 if step > 1e-12 else stalled + 1
            iters += 1
            since_rebuild += 1
            if since_rebuild >= 256:
                rebuild_objective(cost)
                since_rebuild = 0
            if iters > cap:
                raise SimplexFailure(
                    f"no optimum after {cap} pivots in phase {phase} "
                    f"({m} rows, {n} columns)")

    phase1 = np.zeros(n + m)
    phase1[n:] = 1.0
    run(phase1, 1)
    if -T[m, -1] > 1e-7:
        raise SimplexFailure(f"phase 1 ended infeasible at {-T[m, -1]:.3e}")
    # swap leftover artificials for real columns where the row allows it;
    # rows that offer no pivot are redundant and keep a zero-value artificial
    for i in range(m):
        if basis[i] >= n:
            row = np.abs(T[i, :n])
            j = int(np.argmax(row))
            if row[j] > _RC_TOL:
                piv = T[i, j]
                T[i, :] /= piv
                other = T[:, j].copy()
                other[i] = 0.0
                T[:, :] -= np.outer(other, T[i, :])
                basis[i] = j

    phase2 = np.zeros(n + m)
    phase2[:n] = c
    run(phase2, 2)

    x = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i, -1]
    y = -T[m, n:n + m].copy()
    if with_basis:
        return x, float(c @ x), y, iters, [int(j) for j in basis]
    return x, float(c @ x), y, iters


def simplex_minimax(A, f, cap: int = _ITERATION_CAP):
    """Chebyshev fit: minimize epsilon over -eps <= f - A d <= eps.

    The free coefficients are split into positive parts; each target
    contributes an upper and a lower inequality turned into an equality with
    its own slack.  Returns (d, epsilon).
    """
    A = np.asarray(A, dtype=float)
    f = np.asarray(f, dtype=float)
    n, k = A.shape
    if f.shape != (n,):
        raise ValueError("design matrix and target vector disagree on rows")

    # columns: d+ (k), d- (k), eps, lower surpluses (n), upper slacks (n)
    width = 2 * k + 1 + 2 * n
    M = np.zeros((2 * n, width))
    rhs = np.concatenate([f, f])
    M[:n, :k] = A
    M[:n, k:2 * k] = -A
    M[:n, 2 * k] = 1.0                       # A d + eps - s = f
    M[:n, 2 * k + 1:2 * k + 1 + n] = -np.eye(n)
    M[n:, :k] = A
    M[n:, k:2 * k] = -A
    M[n:, 2 * k] = -1.0                      # A d - eps + t = f
    M[n:, 2 * k + 1 + n:] = np.eye(n)
    flip = rhs < 0
    M[flip] *= -1.0
    rhs = np.abs(rhs)

    cost = np.zeros(width)
    cost[2 * k] = 1.0
    x, obj, _, _ = _standard_simplex(cost, M, rhs, cap)
    d = x[:k] - x[k:2 * k]
    return d, max(0.0, float(obj))


def _minimax_compact(A, f, cap: int = _ITERATION_CAP):
    """The same Chebyshev fit solved through its transposed program.

    The dense tableau above is quadratic in the number of targets; with
    thousands of rows it no longer fits a sane pivot budget.  The transposed
    program has one row per coefficient plus a normalization row, so the
    same core solves it cheaply.  Its right-hand side is zero everywhere but
    the normalization row, which makes every vertex massively degenerate, so
    the zeros are replaced by tiny distinct positive values; the exact
    solution is then recovered from the final basis against the unperturbed
    data and certified by strong duality before being returned.
    """
    A = np.asarray(A, dtype=float)
    f = np.asarray(f, dtype=float)
    n, k = A.shape
    scale = max(1.0, float(np.abs(f).max()))
    M = np.zeros((k + 1, 2 * n))
    M[:k, :n] = -A.T
    M[:k, n:] = A.T
    M[k, :] = 1.0
    cost = np.concatenate([-f, f])
    b = np.zeros(k + 1)
    b[k] = 1.0

    failure = None
    for delta in (1e-9, 1e-7, 1e-5):
        bp = b + delta * np.arange(1, k + 2) / (k + 1)
        try:
            _, _, _, _, basis = _standard_simplex(cost, M, bp, cap, with_basis=True)
        except SimplexFailure as exc:
            failure = exc
            continue
        real = [j for j in basis if j < 2 * n]
        B = M[:, real]
        try:
            weights = np.linalg.lstsq(B, b, rcond=None)[0]
            y = np.linalg.lstsq(B.T, cost[real], rcond=None)[0]
        except np.linalg.LinAlgError:
            failure = SimplexFailure("singular basis during recovery")
            continue
        d = y[:k]
        eps = -float(y[k])
        resid = float(np.abs(f - A @ d).max())
        duality_gap = abs(float(cost[real] @ weights) + eps)
        if (weights.min() >= -1e-7 and resid <= eps + 1e-6 * scale
                and duality_gap <= 1e-6 * scale):
            return d, max(0.0, max(eps, resid))
        failure = SimplexFailure(
            f"certificate failed at perturbation {delta:g}: residual gap "
            f"{resid - eps:.3e}, duality gap {duality_gap:.3e}")
    raise failure


def _dedupe_rows(A: np.ndarray, f: np.ndarray):
    """Drop later copies of identical (row, target) pairs."""
    seen = set()
    keep = []
    for i in range(A.shape[0]):
        key = (A[i].tobytes(), float(f[i]))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return A[keep], f[keep]


# how many constraint rows the split-variable tableau is allowed before the
# fit switches to the transposed program
_COMPACT_THRESHOLD = 600


def uniformly_close(problem: FitProblem):
    """Minimax spin coefficients over the problem's constraint collection.

    Returns (coefficients, epsilon) with one coefficient per fitted class.
    The achieved epsilon is optimal, so in particular it never exceeds the
    worst residual of the partially exact coefficients on the same problem.
    """
    A = problem.design()
    f = problem.target_vector()
    A, f = _dedupe_rows(A, f)
    if A.shape[0] <= _COMPACT_THRESHOLD:
        d, eps = simplex_minimax(A, f)
    else:
        d, eps = _minimax_compact(A, f)
    terms = {Y: float(dj) for Y, dj in zip(problem.Y_classes, d)}
    return Interaction(terms, basis=SPIN, scope=PER_CLASS), eps
