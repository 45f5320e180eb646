"""Frequencies of the beam equation, their mass derivatives, and small divisors."""
from __future__ import annotations

import itertools
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import ExcitedSetAnalysis, Point, as_point, integer_ball, norm2

KINDS = ("D0", "D1", "D2plus", "D2minus")
EXCLUDED_MASSES = (4.0 / 3.0, 5.0 / 3.0)


@dataclass(frozen=True)
class DispersionContext:
    d: int
    m: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if not 1.0 <= self.m <= 2.0:
            raise ValueError(f"mass {self.m} outside [1, 2]")

    @property
    def excluded(self) -> bool:
        return is_excluded_mass(self.m)


def is_excluded_mass(m: float, tol: float = 1e-12) -> bool:
    return any(abs(m - e) <= tol for e in EXCLUDED_MASSES)


def frequency_from_norm2(r2, m):
    r2 = np.asarray(r2, dtype=float)
    return np.sqrt(r2 * r2 + m)


def frequency(ctx: DispersionContext, a: Sequence[int]) -> float:
    r2 = norm2(as_point(a))
    return math.sqrt(r2 * r2 + ctx.m)


def bracket(a: Sequence[int]) -> float:
    """max(1, |a|)."""
    return max(1.0, math.sqrt(norm2(as_point(a))))


def frequency_bounds(ctx: DispersionContext, a: Sequence[int]) -> tuple[float, float]:
    b2 = bracket(a) ** 2
    return b2, b2 + ctx.m / (2.0 * b2)


def upsilon(j: int) -> float:
    out = 1.0
    for l in range(j):
        out *= (2 * l - 1) / 2.0
    return out


def frequency_m_derivative(ctx: DispersionContext, a: Sequence[int], j: int) -> float:
    if j < 1:
        raise ValueError("derivative order must be >= 1")
    r2 = norm2(as_point(a))
    return (-1) ** j * upsilon(j) * (r2 * r2 + ctx.m) ** (0.5 - j)


def derivative_matrix(ctx: DispersionContext, points: Sequence[Sequence[int]]) -> np.ndarray:
    p = len(points)
    return np.array([[frequency_m_derivative(ctx, a, i) for a in points] for i in range(1, p + 1)])


def derivative_determinant(ctx: DispersionContext, points: Sequence[Sequence[int]]) -> float:
    """det of (d^i ω_{a_j} / dm^i), i, j = 1..p."""
    pts = [as_point(a) for a in points]
    if not pts:
        raise ValueError("need at least one point")
    if len({norm2(a) for a in pts}) != len(pts):
        raise ValueError("points must have pairwise distinct norms")
    return float(np.linalg.det(derivative_matrix(ctx, pts)))


def derivative_determinant_closed_form(ctx: DispersionContext, points: Sequence[Sequence[int]]) -> float:
    """Factored form: sign · Π ω^-1 · Π Υ_j · Vandermonde(ω^-2), sign included."""
    p = len(points)
    w = np.array([frequency(ctx, a) for a in points])
    x = w ** -2.0
    vander = 1.0
    for i in range(p):
        for j in range(i + 1, p):
            vander *= x[j] - x[i]
    sign = (-1) ** (p * (p + 1) // 2)
    return sign * float(np.prod(1.0 / w)) * math.prod(upsilon(j) for j in range(1, p + 1)) * vander


@dataclass(frozen=True)
class Divisor:
    kind: str
    k: tuple[int, ...]
    a: Point | None = None
    b: Point | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown divisor kind {self.kind!r}")
        if self.kind == "D0" and not any(self.k):
            raise ValueError("D0 divisor needs k != 0")
        if self.kind != "D0" and self.a is None:
            raise ValueError(f"{self.kind} divisor needs a")
        if self.kind in ("D2plus", "D2minus") and self.b is None:
            raise ValueError(f"{self.kind} divisor needs b")


def _check_divisor(analysis: ExcitedSetAnalysis, div: Divisor) -> None:
    if not analysis.admissible:
        raise ValueError("excited set is not admissible")
    if len(div.k) != analysis.n:
        raise ValueError(f"k has length {len(div.k)}, expected {analysis.n}")
    excited = set(analysis.points)
    for p in (div.a, div.b):
        if p is not None:
            if len(p) != analysis.d:
                raise ValueError("divisor point has wrong dimension")
            if p in excited:
                raise ValueError(f"divisor point {p} lies in the excited set")


def formal_symbol_sum(analysis: ExcitedSetAnalysis, div: Divisor) -> Counter:
    """Coefficients of the formal sum after λ_s -> x_{|s|^2}; zero entries dropped."""
    c: Counter = Counter()
    for kj, a in zip(div.k, analysis.points):
        c[norm2(a)] += kj
    if div.a is not None:
        c[norm2(div.a)] += 1
    if div.b is not None:
        c[norm2(div.b)] += 1 if div.kind == "D2plus" else -1
    return Counter({s: v for s, v in c.items() if v != 0})


def classify_divisor(analysis: ExcitedSetAnalysis, div: Divisor) -> str:
    _check_divisor(analysis, div)
    return "trivial_resonance" if not formal_symbol_sum(analysis, div) else "nonresonant"


def evaluate_divisor(ctx: DispersionContext, analysis: ExcitedSetAnalysis, div: Divisor) -> float:
    _check_divisor(analysis, div)
    terms = [kj * frequency(ctx, a) for kj, a in zip(div.k, analysis.points)]
    if div.a is not None:
        terms.append(frequency(ctx, div.a))
    if div.b is not None:
        sign = 1.0 if div.kind == "D2plus" else -1.0
        terms.append(sign * frequency(ctx, div.b))
    return math.fsum(terms)


def trivial_mask(analysis: ExcitedSetAnalysis, kind: str, ks: np.ndarray,
                 a_norm2: np.ndarray | None = None, b_norm2: np.ndarray | None = None) -> np.ndarray:
    """Vectorised trivial-resonance test over all (k, leg) combinations.

    Returns a bool array of shape (len(ks), len(a_norm2)), or (len(ks),) for D0.
    """
    ks = np.atleast_2d(np.asarray(ks, dtype=np.int64))
    if kind == "D0":
        return ~ks.any(axis=1)
    ex = np.array([norm2(p) for p in analysis.points], dtype=np.int64)
    a2 = np.asarray(a_norm2, dtype=np.int64)
    ea = (a2[:, None] == ex[None, :]).astype(np.int64)
    coef = ks[:, None, :] + ea[None, :, :]
    a_free = ~ea.any(axis=1)
    if kind == "D1":
        return ~coef.any(axis=2) & ~a_free[None, :]
    b2 = np.asarray(b_norm2, dtype=np.int64)
    eb = (b2[:, None] == ex[None, :]).astype(np.int64)
    b_free = ~eb.any(axis=1)
    if kind == "D2plus":
        coef = coef + eb[None, :, :]
        free_ok = ~a_free & ~b_free
    else:
        coef = coef - eb[None, :, :]
        # two free legs cancel only when they share a norm
        free_ok = (~a_free & ~b_free) | (a_free & b_free & (a2 == b2))
    return ~coef.any(axis=2) & free_ok[None, :]


def k_vectors(n: int, cutoff: int, include_zero: bool = True) -> np.ndarray:
    """Integer vectors with |k|_1 <= cutoff, lexicographic."""
    ks = [k for k in itertools.product(range(-cutoff, cutoff + 1), repeat=n)
          if sum(map(abs, k)) <= cutoff and (include_zero or any(k))]
    return np.array(ks, dtype=np.int64).reshape(-1, n)


def default_exponent(kind: str, n: int) -> float:
    # D2minus has no explicit exponent; it borrows the D2plus one
    return {"D0": n * n, "D1": 3 * (n + 1) ** 3, "D2plus": 3 * (n + 2) ** 3,
            "D2minus": 3 * (n + 2) ** 3}[kind]


def index_norms(analysis: ExcitedSetAnalysis, index_cutoff: int) -> tuple[np.ndarray, list[Point]]:
    """Distinct |a|^2 over non-excited a with |a| <= cutoff, with one representative each."""
    excited = set(analysis.points)
    reps: dict[int, Point] = {}
    for p in integer_ball(analysis.d, index_cutoff * index_cutoff):
        if p not in excited:
            reps.setdefault(norm2(p), p)
    keys = sorted(reps)
    return np.array(keys, dtype=np.int64), [reps[r] for r in keys]


@dataclass
class MassScan:
    kind: str
    m: np.ndarray
    min_value: np.ndarray
    argmin: list[dict]
    kappa: float
    exponent: float
    k_cutoff: int
    index_cutoff: int
    excluded: np.ndarray

    @property
    def bad_fraction(self) -> float:
        return float(np.mean(self.min_value < self.kappa))

    def rows(self) -> list[dict]:
        return [{"m": float(m), "min_divisor": float(v), **arg, "excluded": bool(e)}
                for m, v, arg, e in zip(self.m, self.min_value, self.argmin, self.excluded)]


def _scan_setup(analysis, kind, k_cutoff, index_cutoff):
    n = analysis.n
    ks = k_vectors(n, k_cutoff, include_zero=kind in ("D1", "D2plus"))
    ex2 = np.array([norm2(p) for p in analysis.points], dtype=float)
    if kind == "D0":
        return ks, ex2, None, None, None, ~trivial_mask(analysis, kind, ks)[:, None]
    r2, reps = index_norms(analysis, index_cutoff)
    if kind == "D1":
        ia = np.arange(len(r2))
        ib = None
        keep = ~trivial_mask(analysis, kind, ks, r2[ia])
    else:
        ia, ib = (g.ravel() for g in np.meshgrid(np.arange(len(r2)), np.arange(len(r2)), indexing="ij"))
        keep = ~trivial_mask(analysis, kind, ks, r2[ia], r2[ib])
    return ks, ex2, (r2, reps), ia, ib, keep


def _scan_one(m, kind, ks, ex2, legs, ia, ib, keep, weights):
    omega = np.sqrt(ex2 ** 2 + m)
    base = ks @ omega
    if kind == "D0":
        vals = np.abs(base)[:, None]
    else:
        lam = frequency_from_norm2(legs[0], m)
        extra = lam[ia]
        if kind == "D2plus":
            extra = extra + lam[ib]
        elif kind == "D2minus":
            extra = extra - lam[ib]
        vals = np.abs(base[:, None] + extra[None, :])
    vals = np.where(keep, vals * weights[:, None], np.inf)
    flat = int(np.argmin(vals))
    return float(vals.flat[flat]), np.unravel_index(flat, vals.shape)


def scan_mass(analysis: ExcitedSetAnalysis, kind: str, k_cutoff: int, index_cutoff: int,
              kappa: float, exponent: float | None = None, m_grid: Sequence[float] | None = None,
              threads: int = 1) -> MassScan:
    """Minimum of |divisor| · <k>^exponent over non-trivial divisors, per grid mass."""
    if kind not in KINDS:
        raise ValueError(f"unknown divisor kind {kind!r}")
    if m_grid is None or len(m_grid) == 0:
        raise ValueError("empty mass grid")
    grid = np.asarray(m_grid, dtype=float)
    if np.any((grid < 1.0) | (grid > 2.0)):
        raise ValueError("mass grid must lie in [1, 2]")
    exponent = default_exponent(kind, analysis.n) if exponent is None else exponent
    ks, ex2, legs, ia, ib, keep = _scan_setup(analysis, kind, k_cutoff, index_cutoff)
    weights = np.maximum(np.abs(ks).sum(axis=1), 1).astype(float) ** exponent

    def work(m):
        return _scan_one(m, kind, ks, ex2, legs, ia, ib, keep, weights)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, grid))
    else:
        results = [work(m) for m in grid]

    argmin = []
    for _, (ki, pi) in results:
        a = legs[1][ia[pi]] if legs is not None else None
        b = legs[1][ib[pi]] if ib is not None else None
        argmin.append({"kind": kind, "k": [int(x) for x in ks[ki]],
                       "a": list(a) if a is not None else None,
                       "b": list(b) if b is not None else None})
    return MassScan(kind=kind, m=grid, min_value=np.array([r[0] for r in results]), argmin=argmin,
                    kappa=kappa, exponent=exponent, k_cutoff=k_cutoff, index_cutoff=index_cutoff,
                    excluded=np.array([is_excluded_mass(m) for m in grid]))


def fitted_shell_exponent(analysis: ExcitedSetAnalysis, kind: str, m: float, k_cutoff: int,
                          index_cutoff: int) -> float:
    """Log-log slope of min |divisor| over shells |k|_1 = K, K = 1..cutoff.

    Its negative is an empirical stand-in for the unstated D2minus exponent.
    """
    ks, ex2, legs, ia, ib, keep = _scan_setup(analysis, kind, k_cutoff, index_cutoff)
    ones = np.ones(len(ks))
    shells = np.abs(ks).sum(axis=1)
    xs, ys = [], []
    for K in range(1, k_cutoff + 1):
        sel = shells == K
        if not sel.any():
            continue
        v, _ = _scan_one(m, kind, ks[sel], ex2, legs, ia, ib, keep[sel], ones[sel])
        if np.isfinite(v) and v > 0:
            xs.append(math.log(K))
            ys.append(math.log(v))
    if len(xs) < 2:
        return float("nan")
    return float(np.polyfit(xs, ys, 1)[0])


@dataclass
class MelnikovScan:
    margin: float
    k: tuple[int, ...] | None
    a: Point | None
    b: Point | None
    tau: float
    k_cutoff: int
    index_cutoff: int
    tail_eps: float


def melnikov_norms(analysis: ExcitedSetAnalysis, index_cutoff: int, c: float) -> tuple[np.ndarray, list[Point]]:
    """Norms of Λ_∞ points outside the class of 0, i.e. with c < |a| <= cutoff."""
    r2, reps = index_norms(analysis, index_cutoff)
    ex = analysis.excited_norms()
    keep = [i for i, r in enumerate(r2) if int(r) not in ex and r > c * c]
    return r2[keep], [reps[i] for i in keep]


def scan_melnikov(ctx: DispersionContext, analysis: ExcitedSetAnalysis, rho_star: Sequence[float],
                  nu: float, k_cutoff: int, index_cutoff: int, tau: float) -> MelnikovScan:
    """min |<k, Ω(ρ*)> - (Λ_a - Λ_b)| · |k|^τ over 0 < |k|_1 <= cutoff and a, b outside [0]."""
    from .normal_form import NormalFormParams, class_radius, external_lambda_norm2, omega_vector

    params = NormalFormParams(ctx, analysis, tuple(rho_star), nu)
    Om = omega_vector(params)
    r2, reps = melnikov_norms(analysis, index_cutoff, class_radius(analysis))
    if len(r2) == 0:
        return MelnikovScan(math.inf, None, None, None, tau, k_cutoff, index_cutoff, 0.0)
    lam = external_lambda_norm2(params, r2)
    diff = lam[:, None] - lam[None, :]
    order = np.argsort(diff, axis=None)
    flat = diff.ravel()[order]
    ks = k_vectors(analysis.n, k_cutoff, include_zero=False)
    kw = ks @ Om
    pos = np.clip(np.searchsorted(flat, kw), 1, len(flat) - 1)
    left, right = flat[pos - 1], flat[pos]
    use_left = np.abs(kw - left) <= np.abs(kw - right)
    best = np.where(use_left, np.abs(kw - left), np.abs(kw - right))
    weights = np.abs(ks).sum(axis=1).astype(float) ** tau
    vals = best * weights
    i = int(np.argmin(vals))
    j = order[pos[i] - 1] if use_left[i] else order[pos[i]]
    ia, ib = np.unravel_index(j, diff.shape)
    return MelnikovScan(float(vals[i]), tuple(int(x) for x in ks[i]), reps[ia], reps[ib], tau,
                        k_cutoff, index_cutoff, melnikov_tail_eps(ctx, rho_star, nu, index_cutoff))


def melnikov_tail_eps(ctx: DispersionContext, rho: Sequence[float], nu: float, r: float) -> float:
    """For |a|, |b| > r, Λ_a - Λ_b lies within this distance of the integer |a|^2 - |b|^2."""
    return (ctx.m + 12 * nu * sum(rho) / (2 * math.pi) ** ctx.d) / (r * r)
