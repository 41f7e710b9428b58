"""Finite-dimensional spectral tools: contour projectors, semigroups, eigenvalue
perturbation slopes and the period map of a time-periodic schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .solver import Propagator, _pieces, _step_sizes
from .spectral import Grid3, dealias_mask
from .velocity import Schedule, Zero, sample_velocity


def check(expected, measured, tolerance, passed=None, **extra) -> dict:
    """Report record shared by every check in the package."""
    if passed is None:
        passed = bool(abs(np.asarray(measured) - np.asarray(expected)).max() <= tolerance)
    out = {"expected": _plain(expected), "measured": _plain(measured),
           "tolerance": float(tolerance), "pass": bool(passed)}
    out.update({k: _plain(v) for k, v in extra.items()})
    return out


def _plain(v):
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()] if v.ndim else _plain(v.item())
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


@dataclass(frozen=True)
class ContourSpec:
    center: complex
    radius: float
    m: int = 64

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("contour radius must be positive")
        if self.m < 16:
            raise ValueError("need at least 16 quadrature points")

    def nodes(self) -> np.ndarray:
        return self.center + self.radius * np.exp(2j * np.pi * np.arange(self.m) / self.m)


def contour_projector(A, c: ContourSpec, eigenvalues=None) -> np.ndarray:
    """Trapezoid rule for (1/2 pi i) times the contour integral of (z - A)^{-1} dz."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    ev = np.linalg.eigvals(A) if eigenvalues is None else np.asarray(eigenvalues)
    gap = np.min(np.abs(np.abs(ev - c.center) - c.radius)) if len(ev) else np.inf
    if gap < 1e-8:
        raise ValueError(f"an eigenvalue lies within {gap:.2e} of the contour")
    eye = np.eye(n)
    P = np.zeros((n, n), dtype=complex)
    for z in c.nodes():
        # dz/(2 pi i) = (z - center) d(theta)/(2 pi) on the circle
        P += (z - c.center) * np.linalg.solve(z * eye - A, eye)
    return P / c.m


def isolating_contour(eigenvalues, targets, m: int = 64) -> ContourSpec:
    """Smallest circle around ``targets`` that keeps the other eigenvalues well outside."""
    ev = np.asarray(eigenvalues)
    targets = np.atleast_1d(targets)
    inside = np.array([np.min(np.abs(targets - z)) < 1e-9 * max(1.0, abs(z)) for z in ev])
    center = targets.mean()
    r_in = np.max(np.abs(ev[inside] - center)) if inside.any() else 0.0
    r_out = np.min(np.abs(ev[~inside] - center)) if (~inside).any() else r_in + 1.0
    if r_out <= r_in * (1 + 1e-9):
        raise ValueError("eigenvalue cluster cannot be separated by a circle")
    r = 0.5 * (r_in + r_out) if r_in > 0 else 0.5 * r_out
    return ContourSpec(complex(center), float(r), m)


def semigroup_action(A, x, t: float) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    with np.errstate(over="raise", invalid="raise"):
        try:
            y = sla.expm(A * t) @ np.asarray(x, dtype=complex)
        except FloatingPointError as e:
            raise OverflowError(f"exp(At) overflows for |A|t = {np.linalg.norm(A, 2) * abs(t):.3g}") from e
    if not np.all(np.isfinite(y)):
        raise OverflowError("exp(At) x is not finite")
    return y


def fitted_log_rate(A, x, t0: float, t1: float, samples: int = 33) -> float:
    ts = np.linspace(t0, t1, samples)
    logs = [math.log(np.linalg.norm(semigroup_action(A, x, t))) for t in ts]
    return float(np.polyfit(ts, logs, 1)[0])


def growth_dichotomy_check(A, x, horizon: float, rel_tol: float = 0.02, proj_tol: float = 1e-10) -> dict:
    """The long-run rate of e^{At}x is the largest Re(lambda) whose projector sees x."""
    A = np.asarray(A, dtype=complex)
    x = np.asarray(x, dtype=complex)
    ev = np.linalg.eigvals(A)
    re_levels = _real_levels(ev)
    xn = np.linalg.norm(x)
    for i, level in enumerate(re_levels):
        cluster = ev[np.abs(ev.real - level) <= 1e-9 * max(1.0, abs(level))]
        Px = np.zeros_like(x)
        for z in _distinct(cluster):
            Px += contour_projector(A, isolating_contour(ev, z), ev) @ x
        if np.linalg.norm(Px) > proj_tol * xn:
            gap = level - re_levels[i + 1] if i + 1 < len(re_levels) else abs(level) + 1.0
            if gap < 1e-8:
                raise ValueError("spectral gap below resolution")
            rate = fitted_log_rate(A, x, horizon / 2, horizon)
            return check(level, rate, rel_tol * gap, gap=gap, projected_norm=float(np.linalg.norm(Px)))
    raise ValueError("x has no component in any spectral subspace")


def _real_levels(ev) -> list:
    levels = []
    for r in sorted(ev.real, reverse=True):
        if not levels or abs(levels[-1] - r) > 1e-9 * max(1.0, abs(r)):
            levels.append(float(r))
    return levels


def _distinct(zs) -> list:
    out = []
    for z in zs:
        if all(abs(z - w) > 1e-9 * max(1.0, abs(z)) for w in out):
            out.append(z)
    return out


def range_factorization(P, tol: float = 1e-8):
    """P = V @ Yh with Yh @ V = I (P idempotent of rank r)."""
    U, s, Wh = np.linalg.svd(P)
    r = int(np.sum(s > tol * max(1.0, s[0])))
    return U[:, :r], s[:r, None] * Wh[:r]


def perturbation_slopes(T0, T1, p: complex, j_list, m: int = 128) -> dict:
    """Finite-difference slopes of the eigenvalues of T0 + j T1 leaving p, against
    the eigenvalues mu_i of P T1 P on the range of the Riesz projector P of p."""
    T0 = np.asarray(T0, dtype=complex)
    T1 = np.asarray(T1, dtype=complex)
    ev0 = np.linalg.eigvals(T0)
    c0 = isolating_contour(ev0, p, m)
    P = contour_projector(T0, c0, ev0)
    V, Yh = range_factorization(P)
    mu, R = np.linalg.eig(Yh @ T1 @ V)
    Linv = np.linalg.inv(R)
    if len(mu) > 1 and np.min([abs(a - b) for i, a in enumerate(mu) for b in mu[i + 1:]]) < 1e-10:
        raise ValueError("P T1 P has repeated eigenvalues; branches cannot be tracked")
    rows = []
    for j in j_list:
        evj = np.linalg.eigvals(T0 + j * T1)
        near = evj[np.abs(evj - c0.center) < c0.radius]
        if len(near) != len(mu):
            raise ValueError(f"j={j}: {len(near)} eigenvalues inside the contour, expected {len(mu)}")
        slopes = (near - p) / j
        cost = np.abs(slopes[:, None] - mu[None, :])
        ri, ci = linear_sum_assignment(cost)
        matched = np.empty_like(mu)
        matched[ci] = slopes[ri]
        # projector continuity: P_i(j) against V r_i l_i^T Yh
        dists = []
        for i in range(len(mu)):
            Pij = contour_projector(T0 + j * T1, isolating_contour(evj, p + j * matched[i], m), evj)
            P1 = V @ np.outer(R[:, i], Linv[i]) @ Yh
            dists.append(float(np.linalg.norm(Pij - P1, 2)))
        rows.append({"j": float(j), "slopes": matched, "projector_distance": dists})
    tol = np.maximum(0.05 * np.abs(mu), 1e-6)
    last = min(rows, key=lambda r: r["j"])
    ok = bool(np.all(np.abs(last["slopes"] - mu) <= tol))
    report = check(mu, last["slopes"], float(tol.max()), passed=ok)
    report["rows"] = [{k: _plain(v) for k, v in r.items()} for r in rows]
    return report


# -- period map ---------------------------------------------------------------

def monodromy_matrix(schedule: Schedule, eps: float, grid: Grid3, dt: float, bloch_j=None,
                     fmax=None, max_dim: int = 4000):
    """Matrix of the one-period map on the dealiased modes of ``grid``.

    Every basis vector is advanced together as one batch with the same step
    sequence ``simulate`` uses, so columns reproduce single runs.
    Returns ``(Phi, index)`` where ``index`` lists (component, ix, iy, iz).
    """
    if schedule.period is None:
        raise ValueError("monodromy needs a time-periodic schedule")
    fmax = grid.default_dealias() if fmax is None else fmax
    mask = dealias_mask(grid, fmax)
    index = np.argwhere(np.broadcast_to(mask, (3,) + grid.shape))
    dim = len(index)
    if dim > max_dim:
        raise ValueError(f"monodromy dimension {dim} exceeds the cost guard {max_dim}")
    sel = (np.arange(dim),) + tuple(index.T)
    batch = np.zeros((dim, 3) + grid.shape, dtype=complex)
    batch[sel] = 1.0
    props = {}
    for a, b, tag in _pieces(schedule, 0.0, schedule.period):
        if tag not in props:
            u = None if isinstance(tag, Zero) else sample_velocity(tag, grid)
            props[tag] = Propagator(grid, u, eps, bloch_j, fmax)
        P = props[tag]
        if P.u is None:
            batch = P.step(batch, b - a)
        else:
            for h in _step_sizes(b - a, dt):
                batch = P.step(batch, h)
    Phi = batch[(slice(None),) + tuple(index.T)].T
    return Phi, index


def spectral_radius_rate(Phi, period: float) -> float:
    r = float(np.max(np.abs(np.linalg.eigvals(Phi))))
    return math.log(r) / period


def gelfand_check(Phi, period: float, reference_history, skip: float = 0.5) -> dict:
    """log r(Phi)/period against the rate fitted at period boundaries of a long run."""
    rate = spectral_radius_rate(Phi, period)
    t, nrm = reference_history.arrays()
    k = np.round(t / period)
    on = (np.abs(t - k * period) <= 1e-9 * np.maximum(1.0, t)) & (t >= skip * t[-1])
    if on.sum() < 2:
        raise ValueError("reference history has fewer than two period samples in its tail")
    fitted = float(np.polyfit(t[on], np.log(nrm[on]), 1)[0])
    tol = max(0.05 * abs(fitted), 0.005)
    return check(fitted, rate, tol, spectral_radius=math.exp(rate * period))
