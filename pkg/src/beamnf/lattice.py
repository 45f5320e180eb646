"""Exact integer-lattice geometry for finite excited sets.

Everything here works with tuples of Python ints; norms are compared through
their squares so no floating point ever enters an admissibility decision.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

Point = tuple[int, ...]
Pair = tuple[Point, Point]


def norm2(p: Sequence[int]) -> int:
    return sum(x * x for x in p)


def add(p: Sequence[int], q: Sequence[int]) -> Point:
    return tuple(x + y for x, y in zip(p, q))


def sub(p: Sequence[int], q: Sequence[int]) -> Point:
    return tuple(x - y for x, y in zip(p, q))


def as_point(p: Iterable[int] | int) -> Point:
    if isinstance(p, int):
        return (p,)
    out = tuple(int(x) for x in p)
    for x, y in zip(out, p):
        if x != y:
            raise ValueError(f"non-integer coordinate in {p!r}")
    return out


@lru_cache(maxsize=4096)
def integer_sphere(d: int, r2: int) -> tuple[Point, ...]:
    """All x in Z^d with |x|^2 == r2, in lexicographic order."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if r2 < 0:
        raise ValueError("squared radius must be >= 0")
    if d == 1:
        if r2 == 0:
            return ((0,),)
        r = math.isqrt(r2)
        return ((-r,), (r,)) if r * r == r2 else ()
    out = []
    top = math.isqrt(r2)
    for x in range(-top, top + 1):
        for rest in integer_sphere(d - 1, r2 - x * x):
            out.append((x,) + rest)
    return tuple(out)


def integer_ball(d: int, r2: int) -> list[Point]:
    """All x in Z^d with |x|^2 <= r2, lexicographic."""
    top = math.isqrt(r2)
    return [p for p in itertools.product(range(-top, top + 1), repeat=d) if norm2(p) <= r2]


def punched_sphere_of(a: Sequence[int]) -> tuple[Point, ...]:
    a = as_point(a)
    return tuple(x for x in integer_sphere(len(a), norm2(a)) if x != a)


def _check_dims(*pts: Sequence[int]) -> int:
    dims = {len(p) for p in pts}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


def angle_points(a: Sequence[int], b: Sequence[int]) -> tuple[Point, ...]:
    """Points x of the sphere through a that are as far from b as a is."""
    a, b = as_point(a), as_point(b)
    d = _check_dims(a, b)
    target = norm2(sub(a, b))
    return tuple(x for x in integer_sphere(d, norm2(a)) if norm2(sub(x, b)) == target)


def angle_pred(a: Sequence[int], b: Sequence[int]) -> bool:
    """The relation a ∠ b: the two spheres meet the lattice in at most two points."""
    return len(angle_points(a, b)) <= 2


def double_angle_pred(a: Sequence[int], b: Sequence[int]) -> bool:
    a, b = as_point(a), as_point(b)
    _check_dims(a, b)
    return angle_pred(a, add(a, b))


def is_admissible(points: Sequence[Sequence[int]]) -> bool:
    norms = [norm2(p) for p in points]
    return len(set(norms)) == len(norms)


def strong_witness(points: Sequence[Point]) -> tuple[Point, Point, tuple[Point, Point, Point]] | None:
    """First ordered pair (a, b) with a ∠∠ b false, plus three offending sphere points."""
    for a, b in itertools.permutations(points, 2):
        hits = angle_points(a, add(a, b))
        if len(hits) > 2:
            return a, b, hits[:3]
    return None


@dataclass(frozen=True)
class ExcitedSetAnalysis:
    d: int
    points: tuple[Point, ...]
    admissible: bool
    strongly_admissible: bool
    strong_witness: tuple[Point, Point, tuple[Point, Point, Point]] | None
    lambda_f: tuple[Point, ...]
    ell_map: dict[Point, Point] = field(repr=False)
    plus_pairs: frozenset[Pair] = field(repr=False)
    minus_pairs: frozenset[Pair] = field(repr=False)
    classes: tuple[tuple[Point, ...], ...] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def M(self) -> int:
        return len(self.classes)

    @property
    def M_star(self) -> int:
        return sum(1 for c in self.classes if len(c) == 1)

    @property
    def index_of(self) -> dict[Point, int]:
        return {p: i for i, p in enumerate(self.points)}

    def ell_index(self, a: Point) -> int:
        return self.index_of[self.ell_map[a]]

    def chi_plus(self, a: Point, b: Point) -> int:
        return int((a, b) in self.plus_pairs)

    def chi_minus(self, a: Point, b: Point) -> int:
        return int((a, b) in self.minus_pairs)

    def class_of(self, a: Point) -> int:
        for j, c in enumerate(self.classes):
            if a in c:
                return j
        raise KeyError(a)

    def excited_norms(self) -> frozenset[int]:
        return frozenset(norm2(p) for p in self.points)

    def in_lambda_infinity(self, s: Point) -> bool:
        return norm2(s) not in self.excited_norms()


def _classes(lambda_f: Sequence[Point], links: Iterable[Pair]) -> tuple[tuple[Point, ...], ...]:
    parent = {p: p for p in lambda_f}

    def find(p: Point) -> Point:
        while parent[p] != p:
            parent[p] = parent[parent[p]]
            p = parent[p]
        return p

    for a, b in links:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[Point, list[Point]] = {}
    for p in lambda_f:
        groups.setdefault(find(p), []).append(p)
    members = [tuple(sorted(g)) for g in groups.values()]
    singles = sorted(c for c in members if len(c) == 1)
    multis = sorted(c for c in members if len(c) > 1)
    return tuple(singles + multis)


def analyze_set(points: Sequence[Sequence[int] | int], d: int | None = None) -> ExcitedSetAnalysis:
    """Resonance combinatorics of a finite excited set.

    For a non-admissible set the map to the excited set is not defined, so
    only the flags and the punched spheres are filled in.
    """
    pts = tuple(as_point(p) for p in points)
    if not pts:
        raise ValueError("excited set must be non-empty")
    dim = _check_dims(*pts)
    if d is not None and d != dim:
        raise ValueError(f"points have dimension {dim}, expected {d}")
    if len(set(pts)) != len(pts):
        raise ValueError("excited set has duplicate points")

    admissible = is_admissible(pts)
    excited = set(pts)
    lam = sorted({x for a in pts for x in integer_sphere(dim, norm2(a)) if x not in excited})
    if not admissible:
        return ExcitedSetAnalysis(dim, pts, False, False, None, tuple(lam), {},
                                  frozenset(), frozenset(), ())

    by_norm = {norm2(a): a for a in pts}
    ell = {s: by_norm[norm2(s)] for s in lam}
    lam_set = set(lam)
    plus, minus = set(), set()
    for a in lam:
        la = ell[a]
        for c in pts:
            # ℓ(a) + c = a + b and ℓ(a) - c = a - b, solved for b with ℓ(b) = c
            b = sub(add(la, c), a)
            if b in lam_set and ell[b] == c:
                plus.add((a, b))
            b = add(sub(a, la), c)
            if b != a and b in lam_set and ell[b] == c:
                minus.add((a, b))

    witness = strong_witness(pts)
    return ExcitedSetAnalysis(
        d=dim,
        points=pts,
        admissible=True,
        strongly_admissible=witness is None,
        strong_witness=witness,
        lambda_f=tuple(lam),
        ell_map=ell,
        plus_pairs=frozenset(plus),
        minus_pairs=frozenset(minus),
        classes=_classes(lam, plus | minus),
    )


def resonant_quadruples(analysis: ExcitedSetAnalysis, cutoff: int) -> dict[int, set[tuple[Point, ...]]]:
    """Zero-momentum quadruples (i, j, k, l) with at least two legs in the excited set.

    Grouped by how many legs lie in the excited set. Pure action monomials
    ({i, j} = {k, l}) are dropped.
    """
    excited = set(analysis.points)
    norms = analysis.excited_norms()
    # two excited legs pin all four norms to excited spheres
    support = [p for r2 in sorted(norms) for p in integer_sphere(analysis.d, r2)
               if max(abs(x) for x in p) <= cutoff]
    by_norm: dict[int, list[Point]] = {}
    for p in support:
        by_norm.setdefault(norm2(p), []).append(p)
    support_set = set(support)
    out: dict[int, set[tuple[Point, ...]]] = {2: set(), 3: set(), 4: set()}
    for i, j in itertools.product(support, repeat=2):
        ni, nj = norm2(i), norm2(j)
        s = add(i, j)
        for k in by_norm[ni] + (by_norm[nj] if nj != ni else []):
            l = sub(s, k)
            if l not in support_set:
                continue
            if sorted((ni, nj)) != sorted((norm2(k), norm2(l))):
                continue
            if sorted((i, j)) == sorted((k, l)):
                continue
            count = sum(p in excited for p in (i, j, k, l))
            if count >= 2:
                out[count].add((i, j, k, l))
    return out


def check_triv_geometric(analysis: ExcitedSetAnalysis, a: Point, a2: Point, b: Point, b2: Point) -> bool:
    """For equal-norm a != b coupled to a2, b2 with the same sign, |a2| != |b2|."""
    if not analysis.strongly_admissible:
        raise ValueError("excited set is not strongly admissible")
    if norm2(a) != norm2(b) or a == b:
        raise ValueError("need |a| == |b| and a != b")
    both_plus = (a, a2) in analysis.plus_pairs and (b, b2) in analysis.plus_pairs
    both_minus = (a, a2) in analysis.minus_pairs and (b, b2) in analysis.minus_pairs
    if not (both_plus or both_minus):
        raise ValueError("pairs are not coupled with a common sign")
    return norm2(a2) != norm2(b2)
