"""Quadratic normal-form data attached to an admissible excited set.

Coordinates on each block are the pairs (ξ_b, η_b), b running over the class
members in lexicographic order. The real form uses ξ = (u + iv)/√2,
η = (u - iv)/√2 per site.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dispersion import DispersionContext, frequency, frequency_from_norm2
from .lattice import ExcitedSetAnalysis, Point, norm2

RHO_FLOOR = 1e-12

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
SWAP2 = np.array([[0.0, 1.0], [1.0, 0.0]])
# (ξ, η) = T (u, v) on one site
T2 = np.array([[1.0, 1.0j], [1.0, -1.0j]]) / math.sqrt(2.0)


def c_star(d: int) -> float:
    return 3.0 / (2.0 * math.pi) ** d


def symplectic_j(n_sites: int) -> np.ndarray:
    return np.kron(np.eye(n_sites), J2)


def class_radius(analysis: ExcitedSetAnalysis) -> float:
    """2 · max <a>^3 over the excited set, with <a> = max(1, |a|)."""
    return 2.0 * max(max(1.0, math.sqrt(norm2(a))) ** 3 for a in analysis.points)


@dataclass(frozen=True)
class NormalFormParams:
    ctx: DispersionContext
    analysis: ExcitedSetAnalysis
    rho: tuple[float, ...]
    nu: float = 0.0

    def __post_init__(self):
        if not self.analysis.admissible:
            raise ValueError("excited set is not admissible")
        if self.ctx.d != self.analysis.d:
            raise ValueError("dimension mismatch between context and excited set")
        if len(self.rho) != self.analysis.n:
            raise ValueError(f"rho has {len(self.rho)} entries, expected {self.analysis.n}")
        if any(not (r > RHO_FLOOR) for r in self.rho):
            raise ValueError(f"rho entries must exceed {RHO_FLOOR}")
        if self.nu < 0:
            raise ValueError("nu must be >= 0")

    @property
    def omega(self) -> np.ndarray:
        return np.array([frequency(self.ctx, a) for a in self.analysis.points])

    @property
    def sqrt_rho(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.rho, dtype=float))

    def with_rho(self, rho: Sequence[float]) -> "NormalFormParams":
        return NormalFormParams(self.ctx, self.analysis, tuple(float(r) for r in rho), self.nu)


def matrix_M(ctx: DispersionContext, analysis: ExcitedSetAnalysis) -> np.ndarray:
    """M[k, l] = 3 (4 - 3 δ_kl) / ((2π)^d λ_k λ_l)."""
    w = np.array([frequency(ctx, a) for a in analysis.points])
    n = len(w)
    mat = 3.0 * (4.0 - 3.0 * np.eye(n)) / ((2.0 * math.pi) ** ctx.d * np.outer(w, w))
    scale = float(np.prod(np.abs(np.diag(mat))))
    if abs(np.linalg.det(mat)) <= 1e-12 * scale:
        raise ArithmeticError("frequency-shift matrix is singular")
    return mat


def omega_vector(params: NormalFormParams) -> np.ndarray:
    return params.omega + params.nu * matrix_M(params.ctx, params.analysis) @ np.asarray(params.rho)


def external_lambda_norm2(params: NormalFormParams, r2) -> np.ndarray:
    lam = frequency_from_norm2(r2, params.ctx.m)
    shift = 6.0 * params.nu / (2.0 * math.pi) ** params.ctx.d * float(np.sum(np.asarray(params.rho) / params.omega))
    return lam + shift / lam


def external_lambda(params: NormalFormParams, a: Sequence[int]) -> float:
    a = tuple(a)
    an = params.analysis
    if a in set(an.points) or a in set(an.lambda_f) or norm2(a) in an.excited_norms():
        raise ValueError(f"{a} is not a far mode")
    return float(external_lambda_norm2(params, norm2(a)))


def mu(params: NormalFormParams, a: Point) -> float:
    """Diagonal coefficient of a Λ_f site; depends on |a| and ρ only."""
    return mu_y(params.ctx, params.analysis, params.sqrt_rho, a)


def mu_y(ctx: DispersionContext, an: ExcitedSetAnalysis, y: np.ndarray, a: Point) -> float:
    if a not in an.ell_map:
        raise ValueError(f"{a} is not in Λ_f")
    lam_a = frequency(ctx, a)
    rho = np.asarray(y, dtype=float) ** 2
    omega = np.array([frequency(ctx, p) for p in an.points])
    j = an.ell_index(a)
    return c_star(ctx.d) * (1.5 * rho[j] / lam_a ** 2 - float(np.sum(rho / omega)) / lam_a)


def coupling(params: NormalFormParams, a: Point, b: Point) -> float:
    return coupling_y(params.ctx, params.analysis, params.sqrt_rho, a, b)


def coupling_y(ctx: DispersionContext, an: ExcitedSetAnalysis, y: np.ndarray, a: Point, b: Point) -> float:
    return (c_star(ctx.d) * y[an.ell_index(a)] * y[an.ell_index(b)]
            / (frequency(ctx, a) * frequency(ctx, b)))


@dataclass
class BlockHamiltonian:
    index: int
    members: tuple[Point, ...]
    K: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def J(self) -> np.ndarray:
        return symplectic_j(self.size)

    @property
    def matrix(self) -> np.ndarray:
        """ℋ = iJK, pure imaginary."""
        return 1j * self.J @ self.K

    @property
    def JK(self) -> np.ndarray:
        return self.J @ self.K

    @property
    def K_real(self) -> np.ndarray:
        return real_form(self.K)

    @property
    def real_matrix(self) -> np.ndarray:
        """J K̃, a real hamiltonian matrix with the same spectrum as ℋ."""
        return self.J @ self.K_real


def real_form(K: np.ndarray) -> np.ndarray:
    n = K.shape[0] // 2
    T = np.kron(np.eye(n), T2)
    Kr = T.T @ K @ T
    if np.max(np.abs(Kr.imag), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(K), initial=0.0)):
        raise ArithmeticError("real form has a non-negligible imaginary part")
    return Kr.real


def block_K(params: NormalFormParams, members: Sequence[Point]) -> np.ndarray:
    return block_K_y(params.ctx, params.analysis, params.sqrt_rho, members)


def block_K_y(ctx: DispersionContext, an: ExcitedSetAnalysis, y: np.ndarray,
              members: Sequence[Point]) -> np.ndarray:
    """Block of K written in y = √ρ; y may vanish or change sign here."""
    n = len(members)
    K = np.zeros((2 * n, 2 * n))
    for i, a in enumerate(members):
        K[2 * i:2 * i + 2, 2 * i:2 * i + 2] = mu_y(ctx, an, y, a) * SWAP2
        for j in range(i + 1, n):
            b = members[j]
            cp, cm = an.chi_plus(a, b), an.chi_minus(a, b)
            if cp or cm:
                # fill both triangles from one value so K is exactly symmetric
                blk = coupling_y(ctx, an, y, a, b) * (cp * np.eye(2) + cm * SWAP2)
                K[2 * i:2 * i + 2, 2 * j:2 * j + 2] = blk
                K[2 * j:2 * j + 2, 2 * i:2 * i + 2] = blk.T
    return K


@dataclass
class KMatrix:
    blocks: list[BlockHamiltonian]
    order: tuple[Point, ...]
    full: np.ndarray
    nu: float

    @property
    def scaled(self) -> np.ndarray:
        return self.nu * self.full

    @property
    def hamiltonian(self) -> np.ndarray:
        return 1j * symplectic_j(len(self.order)) @ self.full


def build_K(params: NormalFormParams) -> KMatrix:
    """K(ρ) per class and assembled over Λ_f in lexicographic site order."""
    an = params.analysis
    blocks = [BlockHamiltonian(j, tuple(c), block_K(params, c)) for j, c in enumerate(an.classes)]
    order = an.lambda_f
    pos = {p: i for i, p in enumerate(order)}
    full = np.zeros((2 * len(order), 2 * len(order)))
    for blk in blocks:
        idx = np.array([2 * pos[p] + s for p in blk.members for s in (0, 1)], dtype=int)
        full[np.ix_(idx, idx)] = blk.K
    return KMatrix(blocks, order, full, params.nu)
