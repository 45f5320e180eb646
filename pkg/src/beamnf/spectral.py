"""Spectra of the block hamiltonians and the certificates built on them."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .dispersion import DispersionContext, frequency
from .lattice import ExcitedSetAnalysis, Point, integer_ball, norm2
from .normal_form import (BlockHamiltonian, NormalFormParams, block_K_y, build_K, c_star,
                          class_radius, external_lambda_norm2, mu, mu_y, symplectic_j)

TYPE_TOL = 1e-9


class ClusteredSpectrumError(ArithmeticError):
    """Eigenvalues too close together to diagonalise reliably."""


def is_zero(x: float, z: complex, tol: float) -> bool:
    return abs(x) <= tol * (1.0 + abs(z))


def eigen_type(z: complex, tol: float = TYPE_TOL) -> str:
    """a: pure imaginary, b: real, c: genuinely complex."""
    re0, im0 = is_zero(z.real, z, tol), is_zero(z.imag, z, tol)
    if re0 and im0:
        return "degenerate"
    if re0:
        return "a"
    if im0:
        return "b"
    return "c"


def _is_representative(z: complex, tol: float) -> bool:
    if not is_zero(z.imag, z, tol):
        return z.imag > 0
    return z.real > 0


def pair_spectrum(eigs: np.ndarray, tol: float = TYPE_TOL) -> list[tuple[int, int]]:
    """Match each eigenvalue z with its mirror -z; z is taken in the upper half plane."""
    eigs = np.asarray(eigs, dtype=complex)
    free = set(range(len(eigs)))
    pairs = []
    reps = sorted((i for i in free if _is_representative(eigs[i], tol)),
                  key=lambda i: (-eigs[i].imag, -eigs[i].real))
    for i in reps:
        if i not in free:
            continue
        free.discard(i)
        j = min(free, key=lambda k: abs(eigs[k] + eigs[i]))
        free.discard(j)
        pairs.append((i, j))
    # zero eigenvalues have no upper representative; pair whatever is left
    rest = sorted(free)
    pairs += [(rest[k], rest[k + 1]) for k in range(0, len(rest) - 1, 2)]
    return pairs


@dataclass
class BlockSpectrum:
    index: int
    members: tuple[Point, ...]
    eigenvalues: np.ndarray
    pairs: list[tuple[complex, complex]]
    types: list[str]
    krein: list[int | None]
    Lambda: list[complex]
    tol: float

    @property
    def hyperbolic(self) -> bool:
        return any(t in ("b", "c") for t in self.types)

    @property
    def elliptic_values(self) -> list[float]:
        return [float(L.real) for L, t in zip(self.Lambda, self.types) if t == "a"]


def block_spectrum(block: BlockHamiltonian, tol: float = TYPE_TOL) -> BlockSpectrum:
    """Eigenvalues of ℋ = iJK with type tags and Krein-normalised frequencies.

    The computation runs on the real matrix J K̃, which has the same spectrum.
    For an elliptic pair ±iω the reported frequency is sign(v* K̃ v) · ω, v the
    eigenvector of +iω; for singletons this is exactly μ.
    """
    Kr = block.K_real
    A = block.J @ Kr
    try:
        w, V = scipy.linalg.eig(A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ArithmeticError(f"eigensolver failed on block {block.index}") from exc
    pairs, types, krein, lams = [], [], [], []
    for i, j in pair_spectrum(w, tol):
        z = complex(w[i])
        t = eigen_type(z, tol)
        pairs.append((z, complex(w[j])))
        types.append(t)
        if t == "a":
            v = V[:, i]
            s = 1 if float(np.real(np.conj(v) @ Kr @ v)) >= 0 else -1
            krein.append(s)
            lams.append(complex(s * abs(z.imag)))
        else:
            krein.append(None)
            lams.append(z / 1j)
    return BlockSpectrum(block.index, block.members, np.asarray(w), pairs, types, krein, lams, tol)


@dataclass
class SpectralReport:
    blocks: list[BlockSpectrum]
    tol: float

    @property
    def elliptic_sites(self) -> tuple[Point, ...]:
        return tuple(p for b in self.blocks if not b.hyperbolic for p in b.members)

    @property
    def hyperbolic_sites(self) -> tuple[Point, ...]:
        return tuple(p for b in self.blocks if b.hyperbolic for p in b.members)


def spectral_report(params: NormalFormParams, tol: float = TYPE_TOL) -> SpectralReport:
    return SpectralReport([block_spectrum(b, tol) for b in build_K(params).blocks], tol)


def discriminant_2d(alpha: float, beta: float, gamma: float) -> float:
    return (beta + gamma) ** 2 - 4.0 * alpha ** 2


def two_site_coefficients(params: NormalFormParams, members: Sequence[Point]) -> tuple[float, float, float]:
    """(α, β, γ) of ⟨Kζ, ζ⟩ = β ξ1η1 + γ ξ2η2 + α(ξ1ξ2 + η1η2) on a plus-coupled pair."""
    if len(members) != 2:
        raise ValueError("need a two-site class")
    p1, p2 = members
    if (p1, p2) not in params.analysis.plus_pairs:
        raise ValueError("sites are not plus-coupled")
    blk = BlockHamiltonian(-1, tuple(members), block_K_y(params.ctx, params.analysis, params.sqrt_rho, members))
    return 2.0 * blk.K[0, 2], 2.0 * blk.K[0, 1], 2.0 * blk.K[2, 3]


def factored_quartic_roots(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Roots of (z² + (γ-β)z - βγ + α²)(z² - (γ-β)z - βγ + α²)."""
    roots = []
    c0 = -beta * gamma + alpha ** 2
    for b1 in (gamma - beta, beta - gamma):
        s = cmath.sqrt(b1 * b1 - 4 * c0)
        roots += [(-b1 + s) / 2, (-b1 - s) / 2]
    return np.array(roots)


@dataclass
class SymplecticDiagonalization:
    U: np.ndarray
    U_tilde: np.ndarray
    eigenvalues: np.ndarray
    pairing: np.ndarray
    gap: float
    diag_residual: float
    symplectic_residual: float


def symplectic_diagonalize(A: np.ndarray, delta: float | None = None, tol: float = TYPE_TOL) -> SymplecticDiagonalization:
    """Diagonalise a hamiltonian matrix A = J S by a symplectic change of basis.

    Columns 2j-1, 2j of the result carry z_j and -z_j (z_j in the upper half
    plane). After rescaling column 2j-1 by the pairing U_{2j-1}ᵀ J U_{2j}, the
    basis satisfies Ũᵀ J Ũ = J.
    """
    A = np.asarray(A)
    N = A.shape[0]
    J = symplectic_j(N // 2)
    normA = np.linalg.norm(A, 2)
    delta = 1e-9 * (1.0 + normA) if delta is None else delta
    w, V = scipy.linalg.eig(A)
    gap = min((abs(w[i] - w[j]) for i in range(N) for j in range(i + 1, N)), default=math.inf)
    if gap < delta:
        raise ClusteredSpectrumError(f"eigenvalue gap {gap:.3e} below {delta:.3e}")
    order = [k for pair in pair_spectrum(w, tol) for k in pair]
    w, V = w[order], V[:, order]
    U = V / np.linalg.norm(V, axis=0)
    pairing = np.array([U[:, 2 * j] @ J @ U[:, 2 * j + 1] for j in range(N // 2)])
    scale = np.ones(N, dtype=complex)
    scale[0::2] = 1.0 / pairing
    Ut = U * scale
    Uinv = np.linalg.inv(Ut)
    diag_res = np.linalg.norm(Uinv @ A @ Ut - np.diag(w), 2) / max(normA, 1e-300)
    symp_res = np.linalg.norm(Ut.T @ J @ Ut - J, 2)
    return SymplecticDiagonalization(U, Ut, w, pairing, gap, float(diag_res), float(symp_res))


@dataclass
class InverseBound:
    ok: bool
    inverse_norm: float
    bound: float
    gap: float


def inverse_bound_check(L: np.ndarray, delta: float | None = None) -> InverseBound:
    """‖U⁻¹‖ <= √N (2‖L‖/δ)^(N-1) for the matrix of unit eigenvectors."""
    L = np.asarray(L)
    N = L.shape[0]
    w, V = scipy.linalg.eig(L)
    gap = min((abs(w[i] - w[j]) for i in range(N) for j in range(i + 1, N)), default=math.inf)
    if delta is None:
        delta = gap
    if gap < delta or (N > 1 and gap == 0):
        raise ClusteredSpectrumError(f"eigenvalue gap {gap:.3e} below {delta:.3e}")
    U = V / np.linalg.norm(V, axis=0)
    inv_norm = float(np.linalg.norm(np.linalg.inv(U), 2))
    bound = math.sqrt(N) * (2.0 * np.linalg.norm(L, 2) / delta) ** (N - 1) if N > 1 else 1.0
    return InverseBound(inv_norm <= bound * (1 + 1e-12), inv_norm, float(bound), float(gap))


def ab_block(a: float, b: float) -> np.ndarray:
    """Symmetric matrix of a(p1q1 + p2q2) + b(p1q2 - p2q1), site order (p1, q1, p2, q2)."""
    S = np.zeros((4, 4))
    S[0, 1] = S[1, 0] = a
    S[2, 3] = S[3, 2] = a
    S[0, 3] = S[3, 0] = b
    S[2, 1] = S[1, 2] = -b
    return S


def ab_bound(a: float, b: float) -> float:
    return 2.0 * (np.linalg.norm(ab_block(a, b), 2) / min(abs(a), abs(b))) ** 3


def spectral_distance(A1: np.ndarray, A2: np.ndarray) -> float:
    """Hausdorff distance between the two spectra."""
    w1, w2 = np.linalg.eigvals(A1), np.linalg.eigvals(A2)
    D = np.abs(w1[:, None] - w2[None, :])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


@dataclass
class LogValue:
    """A real number kept as sign and log10 of its modulus."""
    sign: int
    log10: float

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * 10.0 ** self.log10
        except OverflowError:
            return self.sign * math.inf

    def to_dict(self) -> dict:
        return {"sign": self.sign, "log10_abs": self.log10 if self.sign else None, "value": self.value}


def _log_product(factors) -> LogValue:
    total = 0j
    for f in factors:
        if f == 0:
            return LogValue(0, -math.inf)
        total += cmath.log(complex(f))
    return LogValue(1 if math.cos(total.imag) >= 0 else -1, total.real / math.log(10.0))


def discriminant_of(eigs: Sequence[complex]) -> LogValue:
    """Π_{i≠j} (κ_i - κ_j)."""
    eigs = list(eigs)
    return _log_product(eigs[i] - eigs[j] for i in range(len(eigs)) for j in range(len(eigs)) if i != j)


@dataclass
class Certificates:
    P: LogValue
    D: LogValue
    M: LogValue
    recipe: str


def certificates(params: NormalFormParams) -> Certificates:
    an = params.analysis
    blocks = build_K(params).blocks
    L = [b.real_matrix for b in blocks]
    eigs = [np.linalg.eigvals(x) for x in L]
    P = _log_product(e for ev in eigs for e in ev)
    Ms = an.M_star
    single, multi = list(range(Ms)), list(range(Ms, len(blocks)))
    if not multi:
        recipe, D = "empty", LogValue(1, 0.0)
    elif an.strongly_admissible:
        recipe = "strongly_admissible"
        tail = [e for r in multi for e in eigs[r]]
        parts = [discriminant_of(list(eigs[r]) + tail) for r in single] if single else [discriminant_of(tail)]
        D = LogValue(math.prod(p.sign for p in parts), sum(p.log10 for p in parts))
    else:
        recipe = "admissible"
        parts = [discriminant_of(list(eigs[l]) + list(eigs[r])) for l in single for r in multi]
        D = LogValue(math.prod(p.sign for p in parts), sum(p.log10 for p in parts)) if parts else LogValue(1, 0.0)
    mus = {b: mu(params, b) for b in an.lambda_f}
    factors = list(mus.values())
    factors += [mus[b] - mus[c] for b in an.lambda_f for c in an.lambda_f if norm2(b) != norm2(c)]
    return Certificates(P, D, _log_product(factors), recipe)


@dataclass
class NondegeneracyJet:
    k1: float
    k2: float
    member: Point
    j_sharp: int
    j_star: int

    @property
    def total(self) -> float:
        return self.k1 + self.k2


def variation_y(n: int, j_star: int, x: Sequence[float], eps: float) -> np.ndarray:
    y = eps * np.asarray(x, dtype=float)
    y[j_star] = 1.0
    return y


def nondegeneracy_expansion(ctx: DispersionContext, analysis: ExcitedSetAnalysis, r: int,
                            x: Sequence[float], j_star: int = 0, member: Point | None = None) -> NondegeneracyJet:
    """Second ε-derivative of the eigenvalue that starts at μ(member) on the path
    √ρ = (ε x_1, .., 1 at j_star, .., ε x_n), split into its diagonal part k1
    and the part k2 coming from the couplings inside class r.
    """
    n = analysis.n
    x = np.asarray(x, dtype=float)
    if len(x) != n:
        raise ValueError(f"x needs {n} entries")
    if x[j_star] != 0:
        raise ValueError("x must vanish at j_star")
    members = analysis.classes[r]
    a1 = members[0] if member is None else member
    if a1 not in members:
        raise ValueError(f"{a1} is not in class {r}")
    Cs = c_star(ctx.d)
    lam = np.array([frequency(ctx, p) for p in analysis.points])
    js = analysis.ell_index(a1)
    k1 = Cs / lam[js] * (3.0 * x[js] ** 2 / lam[js] - 2.0 * sum(x[j] ** 2 / lam[j] for j in range(n) if j != j_star))
    y0 = variation_y(n, j_star, x, 0.0)
    mu1 = mu_y(ctx, analysis, y0, a1)
    S = 0.0
    for aj in members:
        if aj == a1:
            continue
        lj = analysis.ell_index(aj)
        if js == j_star:
            phi = x[lj]
        elif lj == j_star:
            phi = x[js]
        else:
            phi = 0.0
        if phi == 0.0:
            continue
        muj = mu_y(ctx, analysis, y0, aj)
        cm, cp = analysis.chi_minus(a1, aj), analysis.chi_plus(a1, aj)
        S += phi ** 2 / frequency(ctx, aj) ** 2 * (cm / (muj - mu1) + cp / (muj + mu1))
    S *= Cs ** 2 / lam[js] ** 2
    return NondegeneracyJet(float(k1), float(-2.0 * S), a1, js, j_star)


def tracked_eigenvalue(ctx: DispersionContext, analysis: ExcitedSetAnalysis, r: int, y: np.ndarray,
                       target: float) -> float:
    """Eigenvalue of JK on class r closest to target, refused if the match is ambiguous."""
    members = analysis.classes[r]
    K = block_K_y(ctx, analysis, y, members)
    w = np.linalg.eigvals(symplectic_j(len(members)) @ K)
    d = np.abs(w - target)
    order = np.argsort(d)
    if len(w) > 1 and d[order[1]] <= 10 * TYPE_TOL * (1 + abs(target)):
        raise ClusteredSpectrumError("tracked eigenvalue is not isolated")
    return float(w[order[0]].real)


def second_derivative_fd(ctx: DispersionContext, analysis: ExcitedSetAnalysis, r: int, x: Sequence[float],
                         j_star: int = 0, member: Point | None = None, h: float = 1e-3) -> float:
    """Richardson-extrapolated second difference of the tracked eigenvalue at ε = 0.

    The eigenvalue is even in ε, so one-sided differences suffice.
    """
    members = analysis.classes[r]
    a1 = members[0] if member is None else member
    n = analysis.n
    y0 = variation_y(n, j_star, x, 0.0)
    base = mu_y(ctx, analysis, y0, a1)
    f0 = tracked_eigenvalue(ctx, analysis, r, y0, base)

    def d2(step):
        fh = tracked_eigenvalue(ctx, analysis, r, variation_y(n, j_star, x, step), f0)
        return 2.0 * (fh - f0) / step ** 2

    return (4.0 * d2(h / 2) - d2(h)) / 3.0


@dataclass
class A1Report:
    margins: dict[str, float]
    delta0: float
    c: float
    beta: float
    nu: float
    index_cutoff: int
    n_far: int
    n_elliptic: int
    hyperbolic_dim: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> dict[str, bool]:
        return {k: v > 0 for k, v in self.margins.items()}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def hyperbolic_restriction(A: np.ndarray, tol: float = TYPE_TOL) -> np.ndarray:
    """A restricted to its invariant subspace of eigenvalues off the imaginary axis,
    in a real orthonormal basis of that subspace."""
    w, V = scipy.linalg.eig(A)
    sel = [i for i, z in enumerate(w) if not is_zero(z.real, z, tol)]
    if not sel:
        return np.zeros((0, 0))
    cols = np.hstack([V[:, sel].real, V[:, sel].imag])
    Q, s, _ = np.linalg.svd(cols, full_matrices=False)
    Q = Q[:, s > 1e-10 * s[0]][:, :len(sel)]
    return Q.T @ A @ Q


def check_hypothesis_A1(params: NormalFormParams, index_cutoff: int, delta0: float | None = None,
                        tol: float = TYPE_TOL) -> A1Report:
    """Margins of the spectral-asymptotic conditions (a)-(e); positive means satisfied.

    Elliptic frequencies of the Λ_f blocks enter multiplied by ν with reference
    value 0; the hyperbolic part enters as ν times the restricted real form.
    """
    an = params.analysis
    nu = params.nu
    delta0 = nu * nu if delta0 is None else delta0
    c = class_radius(an)
    beta = 2.0
    rep = spectral_report(params, tol)
    blocks = build_K(params).blocks

    vals, refs, brackets, groups = [], [], [], []
    n_ell = 0
    hyper = []
    for bs, blk in zip(rep.blocks, blocks):
        top = max(max(1.0, math.sqrt(norm2(p))) for p in bs.members)
        for L in bs.elliptic_values:
            vals.append(nu * L)
            refs.append(0.0)
            brackets.append(top)
            groups.append(0)
            n_ell += 1
        if bs.hyperbolic:
            hyper.append(nu * hyperbolic_restriction(blk.real_matrix, tol))

    ex = an.excited_norms()
    far = sorted({norm2(p) for p in integer_ball(an.d, index_cutoff * index_cutoff)} - set(ex))
    far = np.array(far, dtype=np.int64)
    lam_far = external_lambda_norm2(params, far)
    vals += list(lam_far)
    refs += list(far.astype(float))
    brackets += list(np.maximum(1.0, np.sqrt(far)))
    groups += [0 if r <= c * c else int(r) for r in far]

    v = np.array(vals)
    g = np.array(groups)
    margins = {
        "a": float(np.min(np.abs(v))) - delta0,
        "b": float(np.min(c * np.array(brackets) ** -beta - np.abs(v - np.array(refs)))),
    }
    sums = np.abs(v[:, None] + v[None, :])
    margins["d"] = float(sums.min()) - delta0
    diff = np.abs(v[:, None] - v[None, :])
    cross = g[:, None] != g[None, :]
    margins["e"] = (float(diff[cross].min()) if cross.any() else math.inf) - delta0

    smin = math.inf
    for Hh in hyper:
        if Hh.size == 0:
            continue
        smin = min(smin, float(np.linalg.svd(Hh, compute_uv=False).min()))
        eye = np.eye(Hh.shape[0])
        for L in np.unique(v):
            smin = min(smin, float(np.linalg.svd(L * eye - 1j * Hh, compute_uv=False).min()))
    margins["c"] = smin - delta0
    margins = {k: margins[k] for k in "abcde"}
    return A1Report(margins, delta0, c, beta, nu, index_cutoff, len(far), n_ell,
                    sum(h.shape[0] for h in hyper),
                    details={"elliptic_values": [float(x) for x in v[:n_ell]]})
