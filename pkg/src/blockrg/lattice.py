"""Finite subsets of the square lattice: size measure, canonical forms, class lists."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import isqrt

Site = tuple[int, int]
Sites = tuple[Site, ...]

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1

# the eight maps of the dihedral group of the square, acting on (x, y)
DIHEDRAL_MAPS = (
    lambda x, y: (x, y),
    lambda x, y: (-y, x),
    lambda x, y: (-x, -y),
    lambda x, y: (y, -x),
    lambda x, y: (x, -y),
    lambda x, y: (-x, y),
    lambda x, y: (y, x),
    lambda x, y: (-y, -x),
)


def site_set(sites) -> Sites:
    """Normalize an iterable of (x, y) pairs to a sorted, duplicate-free tuple."""
    out = tuple(sorted({(int(x), int(y)) for x, y in sites}))
    for x, y in out:
        if not (INT32_MIN <= x <= INT32_MAX and INT32_MIN <= y <= INT32_MAX):
            raise ValueError(f"site ({x},{y}) outside signed 32-bit range")
    return out


def spread_num(sites) -> tuple[int, int]:
    """Integer numerator and denominator of the spread: spread = num / n."""
    n = len(sites)
    sx = sy = sxx = syy = 0
    for x, y in sites:
        sx += x
        sy += y
        sxx += x * x
        syy += y * y
    return n * (sxx + syy) - sx * sx - sy * sy, n


def spread(sites) -> float:
    """Sum of squared Euclidean distances from the sites to their centroid.

    Monotone under taking subsets, which is what makes it usable as a
    truncation measure: dropping a site never increases the spread.
    """
    if len(sites) == 0:
        raise ValueError("spread of the empty set is undefined")
    num, n = spread_num(sites)
    return num / n


def spread_within(sites, cutoff: float) -> bool:
    """Exact test spread(sites) <= cutoff (integer arithmetic, no rounding)."""
    num, n = spread_num(sites)
    return num <= cutoff * n


def spread_key(sites) -> Fraction:
    """Exact spread as a Fraction, for stable sorting."""
    num, n = spread_num(sites)
    return Fraction(num, n)


def translate(sites, dx: int, dy: int) -> Sites:
    return tuple(sorted((x + dx, y + dy) for x, y in sites))


def canonical_translate(sites) -> Sites:
    """Translate so the minimum x and minimum y are both zero."""
    if not sites:
        return ()
    mx = min(x for x, y in sites)
    my = min(y for x, y in sites)
    return tuple(sorted((x - mx, y - my) for x, y in sites))


def _dihedral_key(sites) -> tuple:
    # compare candidate images row-major (y before x); this makes the
    # horizontal pair beat the vertical one, fixing the convention
    return tuple(sorted((y, x) for x, y in sites))


def dihedral_images(sites) -> list[Sites]:
    """Canonical translates of the eight dihedral images (with duplicates)."""
    return [canonical_translate(tuple(m(x, y) for x, y in sites)) for m in DIHEDRAL_MAPS]


def canonical_dihedral(sites) -> Sites:
    """Representative of the dihedral-and-translation class of a set."""
    if not sites:
        return ()
    return min(dihedral_images(sites), key=_dihedral_key)


def dihedral_orbit(sites) -> list[Sites]:
    """Distinct translation classes making up the dihedral class of `sites`."""
    seen = []
    for img in dihedral_images(sites):
        if img not in seen:
            seen.append(img)
    return sorted(seen)


@dataclass(frozen=True)
class SymmetryClass:
    """One symmetry class of lattice sets: a representative plus its orbit size.

    orbit_size is 1 for translation classes; for dihedral classes it is the
    number of distinct translation classes merged into the class (1 to 8).
    """

    representative: Sites
    orbit_size: int

    @property
    def spread(self) -> float:
        return spread(self.representative)


def enumerate_classes(cutoff: float, mode: str = "translation") -> list[SymmetryClass]:
    """All classes of nonempty sets with spread <= cutoff, sorted.

    mode is "translation" or "dihedral".  Sets are grown site by site from
    the single-site class; subset monotonicity of the spread guarantees every
    admissible class is reached this way.  Sorted by (spread, cardinality,
    representative).
    """
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    if mode not in ("translation", "dihedral"):
        raise ValueError(f"unknown mode {mode!r}")
    canon = canonical_translate if mode == "translation" else canonical_dihedral

    # any two sites of an admissible set are within sqrt(2*cutoff) of each
    # other, so extensions live in the intersection of discs of that radius
    reach = isqrt(int(2 * cutoff)) + 1

    seed = canon(((0, 0),))
    seen = {seed}
    frontier = [seed]
    while frontier:
        new = []
        for rep in frontier:
            xs = [x for x, y in rep]
            ys = [y for x, y in rep]
            for cx in range(max(xs) - reach, min(xs) + reach + 1):
                for cy in range(max(ys) - reach, min(ys) + reach + 1):
                    if (cx, cy) in rep:
                        continue
                    grown = rep + ((cx, cy),)
                    if not spread_within(grown, cutoff):
                        continue
                    c = canon(grown)
                    if c not in seen:
                        seen.add(c)
                        new.append(c)
        frontier = new

    classes = [
        SymmetryClass(rep, len(dihedral_orbit(rep)) if mode == "dihedral" else 1)
        for rep in seen
    ]
    classes.sort(key=lambda c: (spread_key(c.representative), len(c.representative), c.representative))
    return classes


def format_sites(sites) -> str:
    """Render a site set as {(x1,y1),(x2,y2),...} with no whitespace."""
    return "{" + ",".join(f"({x},{y})" for x, y in sorted(sites)) + "}"


def parse_sites(text: str) -> Sites:
    """Inverse of format_sites."""
    s = text.strip()
    if not (s.startswith("{") and s.endswith("}")):
        raise ValueError(f"bad site set: {text!r}")
    body = s[1:-1]
    if not body:
        return ()
    if not (body.startswith("(") and body.endswith(")")):
        raise ValueError(f"bad site set: {text!r}")
    sites = []
    for part in body[1:-1].split("),("):
        xs, ys = part.split(",")
        sites.append((int(xs), int(ys)))
    return site_set(sites)
