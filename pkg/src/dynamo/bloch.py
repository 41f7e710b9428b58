"""Alpha-effect analysis of the z-independent ABC flow U = (cos y, sin x, sin y + cos x).

Bloch operator L(j) H = (grad + i j) x (delta U x H) + (grad + i j)^2 H with
j = (0, 0, j), the zero-mean corrector S(v), the induced 3x3 matrix M, and
the rescaling link between the n = 1 and n-fold problems.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .spectral import (
    Grid3, PhysicalField, SpectralField, backward_transform, cross, curl_bloch, dealias, fft3,
    forward_transform, ifft3, inverse_laplacian_zero_mean, l2_norm, laplacian_bloch, mean,
)
from .velocity import ABC, RescaledABC, eps_n, sample_velocity

E3 = np.array([0.0, 0.0, 1.0])
DEFAULT_S_GRID = Grid3(32, 32, 4)

# Fourier coefficients of U: q -> U_hat(q), q = (qx, qy)
ABC_STENCIL = {
    (0, 1): np.array([0.5, 0.0, -0.5j]),
    (0, -1): np.array([0.5, 0.0, 0.5j]),
    (1, 0): np.array([0.0, -0.5j, 0.5]),
    (-1, 0): np.array([0.0, 0.5j, 0.5]),
}


class ConvergenceError(RuntimeError):
    pass


def _skew(a) -> np.ndarray:
    """Matrix of b -> a x b."""
    a0, a1, a2 = a
    return np.array([[0, -a2, a1], [a2, 0, -a0], [-a1, a0, 0]], dtype=complex)


# -- corrector and projector ---------------------------------------------------

@dataclass
class SolveInfo:
    iterations: int
    increments: list
    residual: float

    @property
    def contraction(self) -> float:
        inc = [x for x in self.increments if x > 1e-14]
        if len(inc) < 3:
            return 0.0
        ratios = [b / a for a, b in zip(inc[1:-1], inc[2:])]
        return float(max(ratios))


def _s_operator_parts(delta, grid):
    u = sample_velocity(ABC(delta), grid).values
    fmax = tuple(n // 2 - 1 for n in grid.shape)   # U has unit frequency: no aliasing below n/2
    return u, fmax


def _curl_u_cross(u, S: SpectralField, fmax) -> SpectralField:
    """curl(u x S), truncated at fmax."""
    return dealias(curl_bloch(S.like(fft3(cross(u, ifft3(S.coeffs))))), fmax)


def solve_S(v, delta: float, grid: Grid3 = DEFAULT_S_GRID, tol: float = 1e-13,
            maxiter: int = 2000, full_output: bool = False):
    """Zero-mean solution of curl(dU x S) + Lap S = curl(v x dU) by fixed-point iteration.

    Iterates S <- Lap^{-1}(curl(v x dU) - curl(dU x S)).
    """
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    v = np.asarray(v, dtype=complex)
    vn = float(np.linalg.norm(v))
    S = SpectralField.zeros(grid)
    if vn == 0 or delta == 0:
        info = SolveInfo(0, [], 0.0)
        return (S, info) if full_output else S
    u, fmax = _s_operator_parts(delta, grid)
    vfield = np.broadcast_to(v[:, None, None, None], u.shape)
    source = dealias(curl_bloch(S.like(fft3(cross(vfield, u)))), fmax)
    increments = []
    for it in range(1, maxiter + 1):
        new = inverse_laplacian_zero_mean(source - _curl_u_cross(u, S, fmax))
        inc = l2_norm(new - S)
        S = new
        increments.append(inc)
        if inc <= tol * vn:
            break
        if it > 20 and inc > increments[-10]:
            raise ConvergenceError(f"corrector iteration diverges at delta={delta}")
    else:
        raise ConvergenceError(f"corrector iteration did not converge in {maxiter} steps")
    res = _curl_u_cross(u, S, fmax) + laplacian_bloch(S) - source
    info = SolveInfo(it, increments, l2_norm(res))
    return (S, info) if full_output else S


def first_order_S(v, delta: float, grid: Grid3 = DEFAULT_S_GRID) -> SpectralField:
    """delta Lap^{-1} curl(v x U), the leading term of the corrector."""
    v = np.asarray(v, dtype=complex)
    U = sample_velocity(ABC(0.5), grid).values / 0.5
    vfield = np.broadcast_to(v[:, None, None, None], U.shape)
    F = forward_transform(PhysicalField(grid, cross(vfield, U)))
    return delta * inverse_laplacian_zero_mean(curl_bloch(F))


def riesz_P(H: SpectralField, delta: float, grid: Grid3 | None = None) -> SpectralField:
    """Projection onto the kernel of L_0: <H> + S(<H>)."""
    grid = H.grid if grid is None else grid
    if grid != H.grid:
        raise ValueError("H must live on the corrector grid")
    m = mean(H)
    return SpectralField.constant(grid, m) + solve_S(m, delta, grid)


# -- alpha matrix --------------------------------------------------------------

@dataclass
class AlphaMatrix:
    matrix: np.ndarray
    delta: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)

    def to_dict(self):
        ev = sorted(self.eigenvalues, key=lambda z: (-z.real, -z.imag))
        return {"delta": self.delta,
                "matrix": [[[z.real, z.imag] for z in row] for row in self.matrix],
                "eigenvalues": [[float(z.real), float(z.imag)] for z in ev]}


def assemble_M(delta: float, grid: Grid3 = DEFAULT_S_GRID) -> AlphaMatrix:
    """Column l is i e3 x <dU x S(e_l)>."""
    u, _ = _s_operator_parts(delta, grid)
    M = np.zeros((3, 3), dtype=complex)
    for l in range(3):
        S = solve_S(np.eye(3)[l], delta, grid)
        w = fft3(cross(u, ifft3(S.coeffs)))[:, 0, 0, 0]
        M[:, l] = np.cross(1j * E3, w)
    return AlphaMatrix(M, delta)


def m0_closed_form(delta: float) -> AlphaMatrix:
    return AlphaMatrix(1j * delta ** 2 * np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex), delta)


def eigenvalue_set_error(eigs, delta: float) -> float:
    """Max distance after sorting both sets by real part to {+d^2, 0, -d^2}."""
    target = np.array([delta ** 2, 0.0, -delta ** 2])
    got = np.asarray(sorted(eigs, key=lambda z: -z.real))
    return float(np.max(np.abs(got - target)))


# -- Bloch operator ------------------------------------------------------------

@dataclass
class BlochMatrix:
    K: int
    j: float
    delta: float
    modes: np.ndarray           # rows -> (component, kx, ky)
    matrix: np.ndarray | sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.modes.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else self.matrix

    def mode_row(self, c: int, kx: int, ky: int) -> int:
        side = 2 * self.K + 1
        return ((kx + self.K) * side + (ky + self.K)) * 3 + c

    def to_field(self, vec, grid: Grid3) -> SpectralField:
        F = SpectralField.zeros(grid, (0, 0, self.j))
        for row, (c, kx, ky) in enumerate(self.modes):
            F.coeffs[(c,) + grid.mode_index((kx, ky, 0))] = vec[row]
        return F

    def from_field(self, F: SpectralField) -> np.ndarray:
        return np.array([F.coeffs[(c,) + F.grid.mode_index((kx, ky, 0))] for c, kx, ky in self.modes])

    def mean_part(self, vec) -> np.ndarray:
        r = self.mode_row(0, 0, 0)
        return np.asarray(vec[r:r + 3])


def assemble_bloch_matrix(delta: float, j: float, K: int = 8, sparse: bool = False) -> BlochMatrix:
    """Matrix of L(j) on the modes k = (kx, ky, 0) with |kx|, |ky| <= K."""
    if K < 2:
        raise ValueError("truncation K must be >= 2")
    side = 2 * K + 1
    dim = 3 * side * side
    modes = np.array([(c, kx, ky) for kx in range(-K, K + 1) for ky in range(-K, K + 1) for c in range(3)])
    rows, cols, vals = [], [], []

    def put(r0, c0, block):
        for a in range(3):
            for b in range(3):
                if block[a, b] != 0:
                    rows.append(r0 + a)
                    cols.append(c0 + b)
                    vals.append(block[a, b])

    for kx in range(-K, K + 1):
        for ky in range(-K, K + 1):
            r0 = ((kx + K) * side + (ky + K)) * 3
            kj = np.array([kx, ky, j], dtype=float)
            put(r0, r0, -(kj @ kj) * np.eye(3))
            if delta == 0:
                continue
            curl = _skew(1j * kj)
            for (qx, qy), uq in ABC_STENCIL.items():
                sx, sy = kx - qx, ky - qy
                if abs(sx) > K or abs(sy) > K:
                    continue
                c0 = ((sx + K) * side + (sy + K)) * 3
                put(r0, c0, curl @ _skew(delta * uq))
    A = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
    return BlochMatrix(K, j, delta, modes, A if sparse else A.toarray())


def bloch_grid(K: int, nz: int = 4) -> Grid3:
    """Smallest even grid holding |k| <= K + 1 without folding the operator output."""
    n = 2 * K + 2
    return Grid3(n, n, nz)


def apply_bloch_operator(H: SpectralField, delta: float) -> SpectralField:
    """Matrix-free L(j) H with j = H.bloch_j, via pseudo-spectral products."""
    if delta == 0:
        return laplacian_bloch(H)
    u = sample_velocity(ABC(delta), H.grid)
    uxH = PhysicalField(H.grid, cross(u.values, backward_transform(H).values))
    return curl_bloch(forward_transform(uxH, H.bloch_j)) + laplacian_bloch(H)


@dataclass
class EigenReport:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    vector: np.ndarray
    mean_vector: np.ndarray
    delta: float
    j: float
    K: int
    method: str = "dense"

    @property
    def leading(self) -> complex:
        return complex(self.eigenvalues[0])

    def to_dict(self, n_eigs: int = 6):
        return {
            "delta": self.delta, "j": self.j, "K": self.K, "method": self.method,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues[:n_eigs]],
            "residuals": [float(r) for r in self.residuals[:n_eigs]],
            "mean_vector": [[z.real, z.imag] for z in self.mean_vector],
        }


def leading_bloch_mode(delta: float, j: float, K: int = 8, max_dense: int = 2000) -> EigenReport:
    B = assemble_bloch_matrix(delta, j, K, sparse=True)
    if B.dim <= max_dense:
        A = B.dense()
        w, V = sla.eig(A)
        order = np.argsort(-w.real, kind="stable")
        w, V = w[order], V[:, order]
        nrm = np.linalg.norm(A, 2)
        res = np.linalg.norm(A @ V - V * w, axis=0) / np.linalg.norm(V, axis=0) / nrm
        v = V[:, 0] / np.linalg.norm(V[:, 0])
        return EigenReport(w, res, v, B.mean_part(v), delta, j, K)
    lam, v = semigroup_power_iteration(B.matrix)
    res = np.linalg.norm(B.matrix @ v - lam * v) / sp.linalg.norm(B.matrix)
    return EigenReport(np.array([lam]), np.array([res]), v, B.mean_part(v), delta, j, K, "power")


def semigroup_power_iteration(A, tau: float = 20.0, block: int = 6, maxiter: int = 200,
                              tol: float = 1e-12, seed: int = 0):
    """Leading eigenpair of A from subspace iteration with exp(tau A).

    The mean-like modes sit within O(j) of each other, so a single vector
    converges slowly. Rayleigh-Ritz on a small block separates them and only
    the gap to the strongly damped bulk limits the iteration.
    """
    rng = np.random.default_rng(seed)
    n = A.shape[0]
    Q, _ = np.linalg.qr(rng.standard_normal((n, block)) + 1j * rng.standard_normal((n, block)))
    lam = np.inf
    for _ in range(maxiter):
        Q, _ = np.linalg.qr(expm_multiply(tau * A, Q))
        w, Y = np.linalg.eig(Q.conj().T @ (A @ Q))
        i = int(np.argmax(w.real))
        new = complex(w[i])
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            v = Q @ Y[:, i]
            return new, v / np.linalg.norm(v)
        lam = new
    raise ConvergenceError("semigroup subspace iteration did not converge")


def predicted_alpha_rate(delta: float, j: float) -> float:
    return j * delta ** 2 - j ** 2


def alpha_slope(delta: float, j1: float, j2: float, K: int = 5) -> float:
    """Two-point slope of Re p(j) + j^2 between j1 and j2."""
    p1 = leading_bloch_mode(delta, j1, K).leading.real + j1 ** 2
    p2 = leading_bloch_mode(delta, j2, K).leading.real + j2 ** 2
    return (p2 - p1) / (j2 - j1)


# -- growing datum and rescaling -----------------------------------------------

def growing_polarization(delta: float, convention: str = "numeric", grid: Grid3 = DEFAULT_S_GRID) -> np.ndarray:
    """Eigenvector of M for the eigenvalue nearest +delta^2, scaled so its second entry is 1."""
    if convention == "closed_form":
        M = m0_closed_form(delta).matrix
    elif convention == "numeric":
        M = assemble_M(delta, grid).matrix
    else:
        raise ValueError("convention must be 'numeric' or 'closed_form'")
    w, V = np.linalg.eig(M)
    v = V[:, np.argmin(np.abs(w - delta ** 2))]
    v = v / v[1]
    if abs(v[2]) > 1e-8:
        raise ValueError(f"growing eigenvector has a z component {v[2]}")
    v[2] = 0.0
    return v


def growth_initial_datum(delta: float, grid: Grid3, n: int = 1, n0: int | None = None,
                         convention: str = "numeric") -> SpectralField:
    """(0,0,1) + e^{inz} v with v the growing eigenvector of the alpha matrix."""
    if n0 is not None:
        from .velocity import check_resolution
        check_resolution(RescaledABC(n, n0, delta), grid)
    v = growing_polarization(delta, convention)
    B = SpectralField.constant(grid, (0, 0, 1))
    B.coeffs[(slice(None),) + grid.mode_index((0, 0, n))] = v
    return B


@dataclass
class RescalingReport:
    times: list
    norms_1: list
    norms_n: list
    max_rel_diff: float
    tolerance: float = 1e-6

    @property
    def passed(self) -> bool:
        return self.max_rel_diff <= self.tolerance

    def to_dict(self):
        return {"expected": 0.0, "measured": self.max_rel_diff,
                "tolerance": self.tolerance, "pass": self.passed}


def rescaling_grid(n0: int, n: int) -> Grid3:
    base = 3 * n0 + 1
    base += base % 2
    return Grid3(n * base, n * base, 4 * n)


def rescaling_check(delta: float, n0: int, n: int, horizon: float, dt: float = 0.05) -> RescalingReport:
    """Compare the n = 1 run at eps_1 with the n-fold rescaled run at eps_n."""
    from .solver import SolverConfig, simulate

    g1, gn = rescaling_grid(n0, 1), rescaling_grid(n0, n)
    f1 = g1.default_dealias()
    cfg1 = SolverConfig(dt=dt, eps=eps_n(1, n0), dealias_limit=f1, sample_every=5)
    cfgn = SolverConfig(dt=dt, eps=eps_n(n, n0), dealias_limit=tuple(n * f for f in f1), sample_every=5)
    _, h1 = simulate(RescaledABC(1, n0, delta), growth_initial_datum(delta, g1, 1), cfg1, horizon)
    _, hn = simulate(RescaledABC(n, n0, delta), growth_initial_datum(delta, gn, n), cfgn, horizon)
    a, b = np.asarray(h1.norm), np.asarray(hn.norm)
    if h1.t != hn.t:
        raise RuntimeError("sample times differ between the two runs")
    return RescalingReport(h1.t, h1.norm, hn.norm, float(np.max(np.abs(a - b) / a)))


def report_json(obj) -> str:
    return json.dumps(obj.to_dict(), indent=2, sort_keys=True)
