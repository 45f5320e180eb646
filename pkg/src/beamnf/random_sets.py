"""Monte Carlo statistics of random excited sets and sphere point counts.

Randomness comes from Philox streams keyed on the seed, with the counter set
by a fixed block of trials. A trial's draws therefore depend only on
(seed, trial index), never on how blocks are spread over threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

BLOCK = 1024


@dataclass(frozen=True)
class TrialConfig:
    d: int
    n: int
    R: int
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if ball_size(self.d, self.R) < self.n:
            raise ValueError(f"ball of radius {self.R} holds fewer than {self.n} points")


def square_counts(limit: int) -> np.ndarray:
    c = np.zeros(limit + 1, dtype=np.int64)
    for x in range(-math.isqrt(limit), math.isqrt(limit) + 1):
        c[x * x] += 1
    return c


def sphere_counts(d: int, limit: int) -> np.ndarray:
    """|S(√r2)| in Z^d for r2 = 0..limit."""
    one = square_counts(limit)
    out = one.copy()
    for _ in range(d - 1):
        out = np.convolve(out, one)[:limit + 1]
    return out


def ball_size(d: int, R: int) -> int:
    return int(sphere_counts(d, R * R).sum())


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, block]))


def _draw_tuple(rng: np.random.Generator, d: int, n: int, R: int) -> np.ndarray:
    """One n-tuple of independent uniform points of the ball, by cube rejection."""
    out = np.empty((0, d), dtype=np.int64)
    while len(out) < n:
        cand = rng.integers(-R, R + 1, size=(2 * n + 4, d))
        out = np.vstack([out, cand[(cand * cand).sum(axis=1) <= R * R]])
    return out[:n]


def _distinct(pts: np.ndarray) -> np.ndarray:
    """Row-wise flag over a (B, n, d) array: all n points pairwise different."""
    eq = (pts[:, :, None, :] == pts[:, None, :, :]).all(axis=3)
    n = pts.shape[1]
    eq[:, np.arange(n), np.arange(n)] = False
    return ~eq.any(axis=(1, 2))


def sample_block(cfg: TrialConfig, block: int) -> tuple[np.ndarray, int]:
    """Sets for trials block*BLOCK .. (block+1)*BLOCK - 1 (clipped), and how many
    first draws were rejected for a repeated point."""
    start = block * BLOCK
    size = min(BLOCK, cfg.trials - start)
    if size <= 0:
        raise IndexError("block beyond trial count")
    rng = _block_rng(cfg.seed, block)
    d, n, R = cfg.d, cfg.n, cfg.R
    # generous cube draw covers the ball rejection for almost every trial
    k = int(math.ceil(n * (2 * R + 1) ** d / ball_size(d, R))) * 2 + 4
    cand = rng.integers(-R, R + 1, size=(size, k, d))
    inside = (cand * cand).sum(axis=2) <= R * R
    out = np.empty((size, n, d), dtype=np.int64)
    redo = []
    for t in range(size):
        pts = cand[t][inside[t]]
        if len(pts) < n:
            redo.append(t)
        else:
            out[t] = pts[:n]
    ok = _distinct(out)
    ok[redo] = False
    collisions = int((~ok).sum()) - len(redo)
    for t in np.flatnonzero(~ok):
        while True:
            pts = _draw_tuple(rng, d, n, R)
            if _distinct(pts[None])[0]:
                out[t] = pts
                break
    return out, collisions


def sample_set(cfg: TrialConfig, trial: int) -> tuple[tuple[int, ...], ...]:
    if not 0 <= trial < cfg.trials:
        raise IndexError("trial index out of range")
    pts, _ = sample_block(cfg, trial // BLOCK)
    return tuple(tuple(int(v) for v in p) for p in pts[trial % BLOCK])


def admissible_mask(sets: np.ndarray) -> np.ndarray:
    norms = np.sort((sets * sets).sum(axis=2), axis=1)
    return ~(np.diff(norms, axis=1) == 0).any(axis=1)


class SphereTable:
    """Lattice points of the ball of radius R grouped by squared norm."""

    def __init__(self, d: int, R: int):
        r = R
        axes = np.arange(-r, r + 1)
        grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
        n2 = (grid * grid).sum(axis=1)
        keep = n2 <= r * r
        grid, n2 = grid[keep], n2[keep]
        order = np.argsort(n2, kind="stable")
        self.points = grid[order]
        self.start = np.searchsorted(n2[order], np.arange(r * r + 2))

    def sphere(self, r2: int) -> np.ndarray:
        return self.points[self.start[r2]:self.start[r2 + 1]]


def strongly_admissible_sets(sets: np.ndarray, table: SphereTable, admissible: np.ndarray) -> np.ndarray:
    """a ∠∠ b for every ordered pair: at most two sphere points x with x·(a+b) = a·(a+b)."""
    out = admissible.copy()
    n = sets.shape[1]
    for t in np.flatnonzero(admissible):
        s = sets[t]
        for i in range(n):
            a = s[i]
            sph = table.sphere(int(a @ a))
            for j in range(n):
                if i == j:
                    continue
                c = a + s[j]
                if np.count_nonzero(sph @ c == a @ c) > 2:
                    out[t] = False
                    break
            if not out[t]:
                break
    return out


@dataclass
class ProbabilityEstimate:
    cfg: TrialConfig
    admissible: int
    strongly_admissible: int | None
    collisions: int

    def _ci(self, k: int) -> tuple[float, float]:
        ci = binomtest(k, self.cfg.trials).proportion_ci(confidence_level=0.95, method="wilson")
        return float(ci.low), float(ci.high)

    @property
    def p_admissible(self) -> float:
        return self.admissible / self.cfg.trials

    @property
    def p_strongly_admissible(self) -> float | None:
        return None if self.strongly_admissible is None else self.strongly_admissible / self.cfg.trials

    @property
    def ci_admissible(self) -> tuple[float, float]:
        return self._ci(self.admissible)

    @property
    def ci_strongly_admissible(self) -> tuple[float, float] | None:
        return None if self.strongly_admissible is None else self._ci(self.strongly_admissible)

    @property
    def collision_rate(self) -> float:
        return self.collisions / self.cfg.trials

    def to_dict(self) -> dict:
        return {
            "trials": self.cfg.trials,
            "p_admissible": self.p_admissible,
            "ci_admissible": list(self.ci_admissible),
            "p_strongly_admissible": self.p_strongly_admissible,
            "ci_strongly_admissible": (list(self.ci_strongly_admissible)
                                       if self.strongly_admissible is not None else None),
            "collision_rate": self.collision_rate,
            "ci_method": "wilson-95",
        }


def estimate_probabilities(cfg: TrialConfig, strong: bool = True, threads: int = 1) -> ProbabilityEstimate:
    """Frequencies of admissible and strongly admissible sets among distinct n-tuples."""
    table = SphereTable(cfg.d, cfg.R) if strong else None

    def work(block: int):
        sets, coll = sample_block(cfg, block)
        adm = admissible_mask(sets)
        st = int(strongly_admissible_sets(sets, table, adm).sum()) if strong else 0
        return int(adm.sum()), st, coll

    blocks = range((cfg.trials + BLOCK - 1) // BLOCK)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    adm = sum(p[0] for p in parts)
    st = sum(p[1] for p in parts) if strong else None
    return ProbabilityEstimate(cfg, adm, st, sum(p[2] for p in parts))


def birthday_distinct_probability(d: int, n: int, R: int) -> float:
    size = ball_size(d, R)
    return math.prod(1 - i / size for i in range(n))


@dataclass
class SphereGrowth:
    d: int
    r2: np.ndarray
    counts: np.ndarray
    C_fit: float
    theta: float
    envelope_exponent: float


def sphere_growth(d: int, Rmax: int, theta: float = 4.0 / 3.0) -> SphereGrowth:
    """Exact |S(R)| for R^2 <= Rmax^2, the smallest C with |S(R)| <= C R^theta, and
    the log-log slope of the running maximum."""
    counts = sphere_counts(d, Rmax * Rmax)
    r2 = np.arange(len(counts))
    R = np.sqrt(r2[1:])
    g = counts[1:].astype(float)
    C_fit = float(np.max(g / R ** theta))
    env = np.maximum.accumulate(g)
    sel = R >= 2
    slope = float(np.polyfit(np.log(R[sel]), np.log(env[sel]), 1)[0]) if sel.sum() >= 2 else float("nan")
    return SphereGrowth(d, r2, counts, C_fit, theta, slope)
