"""Central defaults; every report echoes this block."""
from __future__ import annotations

import os

SCHEMA_VERSION = "1.0"
THREADS_ENV = "BEAMNF_THREADS"

DEFAULTS = {
    "type_tol": 1e-9,
    "residual_tol": 1e-9,
    "rho_floor": 1e-12,
    "det_rel_tol": 1e-12,
    "nu": 0.0,
    "k_cutoff": 8,
    "index_cutoff": 10,
    "a1_index_cutoff": 20,
    "kappa": 1e-6,
    "m_grid_points": 2000,
    "divisor_index_cutoff": 6,
    "divisor_k_cutoff": 4,
    "trials": 100000,
    "block_size": 1024,
    "ci_method": "wilson-95",
    "threads": 1,
}


def resolve_threads(flag: int | None) -> int:
    """Thread count: the environment overrides the flag; 0 means all cores."""
    raw = os.environ.get(THREADS_ENV)
    n = int(raw) if raw not in (None, "") else (DEFAULTS["threads"] if flag is None else flag)
    if n < 0:
        raise ValueError("thread count must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)
