"""Time integration of the kinematic dynamo equation

    dB/dt = curl(u x B) + eps * Laplacian(B)

with piecewise-constant-in-time velocity fields.  Diffusion is integrated
exactly through an integrating factor; the induction term uses the classical
four-stage Runge-Kutta rule in the Lawson form.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    Grid3, PhysicalField, SpectralField, cross, dealias_mask, divergence_bloch,
    fft3, ifft3, leray_project, mean,
)
from .velocity import (
    ABC, CLOSED_FORM_POLARIZATION, RescaledABC, Schedule, VelocityTag, Zero, sample_velocity,
)

CSV_HEADER = ["t", "l2norm", "mean1_re", "mean1_im", "mean2_re", "mean2_im",
              "mean3_re", "mean3_im", "div_residual"]


class StabilityWarning(UserWarning):
    pass


log = logging.getLogger("dynamo")


@dataclass
class SolverConfig:
    dt: float
    eps: float
    dealias_limit: int | tuple | None = None
    sample_every: int = 10
    clean_every: int = 100
    heat_samples: int = 50     # samples spread over a u = 0 segment
    warn_unstable: bool = True
    cap_dt: bool = False       # per segment, use min(dt, default_dt) instead of warning
    reduce_lattice: bool = False
    max_cosets: int = 16
    coset_floor: float = 1e-12  # relative size below which a mode counts as roundoff

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")

    def fmax(self, grid: Grid3):
        return grid.default_dealias() if self.dealias_limit is None else self.dealias_limit


@dataclass
class EnergyHistory:
    t: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    div: list = field(default_factory=list)

    def record(self, t: float, coeffs: np.ndarray, bloch_j: np.ndarray, grid: Grid3):
        if self.t and t <= self.t[-1]:
            return
        F = SpectralField(grid, coeffs, bloch_j)
        self.t.append(float(t))
        self.norm.append(float(np.sqrt(np.sum(np.abs(coeffs) ** 2))))
        self.mean.append(mean(F))
        self.div.append(float(np.sqrt(np.sum(np.abs(divergence_bloch(F)) ** 2))))

    def arrays(self):
        return np.asarray(self.t), np.asarray(self.norm)

    def norm_at(self, t: float) -> float:
        ts, ns = self.arrays()
        if not ts[0] <= t <= ts[-1]:
            raise ValueError(f"time {t} outside the recorded history [{ts[0]}, {ts[-1]}]")
        return float(np.exp(np.interp(t, ts, np.log(ns))))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, n, m, d in zip(self.t, self.norm, self.mean, self.div):
            row = [t, n]
            for c in m:
                row += [c.real, c.imag]
            row.append(d)
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EnergyHistory":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != CSV_HEADER:
            raise ValueError("unexpected energy CSV header")
        h = cls()
        for r in rows[1:]:
            v = [float(x) for x in r]
            h.t.append(v[0])
            h.norm.append(v[1])
            h.mean.append(np.array([v[2] + 1j * v[3], v[4] + 1j * v[5], v[6] + 1j * v[7]]))
            h.div.append(v[8])
        return h


class Propagator:
    """One velocity field on one grid: right-hand side and Lawson RK4 steps.

    Works on raw coefficient arrays with optional leading batch axes.  A
    stack of Bloch offsets of shape (b, 3), with masks of shape (b, nx, ny, nz),
    advances b independent blocks at once.
    """

    def __init__(self, grid: Grid3, u: PhysicalField | None, eps: float, bloch_j=None, fmax=None,
                 mask=None):
        self.grid = grid
        self.eps = eps
        self.bloch_j = np.zeros(3) if bloch_j is None else np.asarray(bloch_j, float)
        self.K = grid.kvec + self.bloch_j[..., :, None, None, None]
        self.k2 = (self.K ** 2).sum(axis=-4)
        if mask is None:
            mask = dealias_mask(grid, grid.default_dealias() if fmax is None else fmax)
        self.mask = mask
        self.iK = 1j * self.K * self.mask[..., None, :, :, :]
        self.u = None
        if u is not None and np.any(u.values):
            self.u = u.values
        self._factors = {}

    @property
    def max_speed(self) -> float:
        return 0.0 if self.u is None else float(np.abs(self.u).max())

    @property
    def k_max(self) -> float:
        return float(np.sqrt(self.k2[self.mask].max()))

    def stable_dt(self) -> float:
        s = self.max_speed * self.k_max
        return math.inf if s == 0 else 0.5 / s

    def rhs(self, c: np.ndarray) -> np.ndarray:
        if self.u is None:
            return np.zeros_like(c)
        return cross(self.iK, fft3(cross(self.u, ifft3(c))))

    def factors(self, h: float):
        f = self._factors.get(h)
        if f is None:
            k2 = self.k2[..., None, :, :, :]
            f = (np.exp(-self.eps * k2 * h), np.exp(-self.eps * k2 * h / 2))
            if len(self._factors) < 8:
                self._factors[h] = f
        return f

    def step(self, c: np.ndarray, h: float) -> np.ndarray:
        E, E2 = self.factors(h)
        if self.u is None:
            return E * c
        a = self.rhs(c)
        b = self.rhs(E2 * (c + 0.5 * h * a))
        cc = self.rhs(E2 * c + 0.5 * h * b)
        d = self.rhs(E * c + h * E2 * cc)
        return E * c + (h / 6.0) * (E * a + 2.0 * E2 * (b + cc) + d)


def rhs_advect_stretch(B: SpectralField, u: PhysicalField, dealias_limit=None) -> SpectralField:
    if B.grid != u.grid:
        raise ValueError("B and u live on different grids")
    P = Propagator(B.grid, u, 1.0, B.bloch_j, dealias_limit)
    return B.like(P.rhs(B.coeffs))


def default_dt(grid: Grid3, tag: VelocityTag, bloch_j=None) -> float:
    P = Propagator(grid, sample_velocity(tag, grid), 1.0, bloch_j)
    s = P.max_speed * P.k_max
    return 0.1 if s == 0 else min(0.1, 0.25 / s)


def step(B: SpectralField, u: PhysicalField, config: SolverConfig) -> SpectralField:
    P = Propagator(B.grid, u, config.eps, B.bloch_j, config.fmax(B.grid))
    _check_stability(P, config.dt, config)
    return B.like(P.step(B.coeffs, config.dt))


def _check_stability(P: Propagator, h: float, config: SolverConfig):
    if config.warn_unstable and h > P.stable_dt() * (1 + 1e-12):
        warnings.warn(
            f"dt={h:g} exceeds the advective limit {P.stable_dt():g}", StabilityWarning, stacklevel=3
        )


def _pieces(velocity, t_start: float, t_end: float):
    if not isinstance(velocity, Schedule):
        yield t_start, t_end, velocity
        return
    if t_end > velocity.horizon + 1e-9:
        raise ValueError(f"t_end={t_end} exceeds the schedule horizon {velocity.horizon}")
    offset = 0.0
    while True:
        for seg in velocity.segments:
            a, b = seg.t0 + offset, seg.t1 + offset
            if b <= t_start:
                continue
            if a >= t_end:
                return
            yield max(a, t_start), min(b, t_end), seg.tag
        if velocity.period is None:
            return
        offset += velocity.period


def _step_sizes(D: float, dt: float):
    nfull = int(math.floor(D / dt + 1e-9))
    hs = [dt] * nfull
    rem = D - nfull * dt
    if rem > 1e-9 * dt:
        hs.append(rem)
    return hs


class CosetBlock:
    """The modes (r1 + f*a1, r2 + f*a2, m) of a full grid as a Bloch field on a small grid.

    A z-independent flow of frequency f couples only modes in the same coset of
    (f Z)^2 x {m}.  Rescaling x -> f x maps such a coset to a periodic field with
    Bloch offset (r1, r2, m)/f, diffusivity eps*f^2 and the unit-frequency flow.
    """

    def __init__(self, full: Grid3, fmax, f: int, r1: int, r2: int, m: int, nr: int | None = None):
        self.f = f
        self.key = (r1, r2, m)
        self.bloch_j = np.array([r1 / f, r2 / f, m / f])
        ranges = [np.arange(-((fm + r) // f), (fm - r) // f + 1) for r, fm in ((r1, fmax[0]), (r2, fmax[1]))]
        a1, a2 = np.meshgrid(*ranges, indexing="ij")
        a1, a2 = a1.ravel(), a2.ravel()
        # products reach one step further; this size keeps them off the kept modes
        self.min_size = max(4, 2 * int(max(np.abs(a1).max(), np.abs(a2).max())) + 2)
        nr = self.min_size if nr is None else nr
        if nr < self.min_size:
            raise ValueError(f"reduced grid {nr} is smaller than the required {self.min_size}")
        self.grid = Grid3(nr, nr, 4)
        self.full_idx = ((r1 + f * a1) % full.nx, (r2 + f * a2) % full.ny,
                         np.full(a1.shape, m % full.nz))
        self.red_idx = (a1 % nr, a2 % nr, np.zeros(a1.shape, int))
        self.mask = np.zeros(self.grid.shape, bool)
        self.mask[self.red_idx] = True

    def extract(self, c: np.ndarray) -> np.ndarray:
        out = np.zeros((3,) + self.grid.shape, complex)
        out[(slice(None),) + self.red_idx] = c[(slice(None),) + self.full_idx]
        return out

    def embed(self, h: np.ndarray, c: np.ndarray) -> None:
        c[(slice(None),) + self.full_idx] = h[(slice(None),) + self.red_idx]


def coset_blocks(c: np.ndarray, grid: Grid3, fmax, f: int, floor: float = 0.0):
    """Cosets carrying the content of ``c`` on a common reduced grid (None if
    some content lies outside ``fmax``).  Modes below ``floor * max|c|`` are
    treated as empty."""
    fmax = (fmax,) * 3 if np.isscalar(fmax) else tuple(fmax)
    a = np.abs(c)
    live = np.any(a > floor * a.max(), axis=0)
    if np.any(live & ~dealias_mask(grid, fmax)):
        return None
    kx, ky, kz = grid.wavenumbers
    ix, iy, iz = np.nonzero(live)
    h = (f - 1) // 2
    keys = sorted(set(zip(((kx[ix].astype(int) + h) % f) - h,
                          ((ky[iy].astype(int) + h) % f) - h,
                          kz[iz].astype(int))))
    blocks = [CosetBlock(grid, fmax, f, int(r1), int(r2), int(m)) for r1, r2, m in keys]
    nr = max((b.min_size for b in blocks), default=4)
    return [CosetBlock(grid, fmax, f, *b.key, nr=nr) for b in blocks]


def _record_blocks(hist: EnergyHistory, t: float, blocks, H: np.ndarray):
    if hist.t and t <= hist.t[-1]:
        return
    m = np.zeros(3, complex)
    dv = 0.0
    for i, blk in enumerate(blocks):
        F = SpectralField(blk.grid, H[i], blk.bloch_j)
        dv += float(np.sum(np.abs(divergence_bloch(F)) ** 2)) * blk.f ** 2
        if blk.key == (0, 0, 0):
            m = H[i, :, 0, 0, 0].copy()
    hist.t.append(float(t))
    hist.norm.append(float(np.sqrt(np.sum(np.abs(H) ** 2))))
    hist.mean.append(m)
    hist.div.append(math.sqrt(dv))


def _reduced_piece(tag: RescaledABC, c, a, b, grid, fmax, config, hist, nstep):
    f = tag.frequency
    blocks = coset_blocks(c, grid, fmax, f, config.coset_floor)
    if not blocks or len(blocks) > config.max_cosets:
        log.warning("lattice reduction unavailable (%s cosets); using the full grid",
                    "unresolved" if blocks is None else len(blocks))
        return None
    g = blocks[0].grid
    H = np.stack([blk.extract(c) for blk in blocks])
    js = np.stack([blk.bloch_j for blk in blocks])
    P = Propagator(g, sample_velocity(ABC(tag.delta), g), config.eps * f * f, js,
                   mask=np.stack([blk.mask for blk in blocks]))
    dt = config.dt
    if config.cap_dt:
        # speed*wavenumber is the same in reduced and full coordinates
        dt = min(dt, 0.5 * P.stable_dt())
    else:
        _check_stability(P, dt, config)
    for i, h in enumerate(_step_sizes(b - a, dt)):
        H = P.step(H, h)
        nstep += 1
        if config.clean_every and nstep % config.clean_every == 0:
            H = np.stack([leray_project(SpectralField(g, x, blk.bloch_j)).coeffs
                          for blk, x in zip(blocks, H)])
        if (i + 1) % config.sample_every == 0:
            _record_blocks(hist, min(a + dt * (i + 1), b), blocks, H)
    _record_blocks(hist, b, blocks, H)
    out = np.zeros_like(c)
    for blk, x in zip(blocks, H):
        blk.embed(x, out)
    return out, nstep


def simulate(velocity, B_in: SpectralField, config: SolverConfig, t_end: float,
             t_start: float = 0.0, history: EnergyHistory | None = None, on_boundary=None):
    """Advance ``B_in`` from ``t_start`` to ``t_end``.

    ``velocity`` is a Schedule or a single VelocityTag held constant.  A sample
    is recorded at every segment boundary; ``on_boundary(t, field)`` is called
    there as well.  With ``config.reduce_lattice`` the rescaled ABC pieces of a
    field with j = 0 run on the invariant coset blocks (see CosetBlock), which
    is the same discrete dynamics at a fraction of the cost.
    """
    grid, j = B_in.grid, B_in.bloch_j
    fmax = config.fmax(grid)
    hist = EnergyHistory() if history is None else history
    c = B_in.coeffs.copy()
    hist.record(t_start, c, j, grid)
    props, nstep = {}, 0
    for a, b, tag in _pieces(velocity, t_start, t_end):
        done = None
        if config.reduce_lattice and isinstance(tag, RescaledABC) and not np.any(j):
            done = _reduced_piece(tag, c, a, b, grid, fmax, config, hist, nstep)
        if done is not None:
            c, nstep = done
        else:
            if tag not in props:
                u = None if isinstance(tag, Zero) else sample_velocity(tag, grid)
                props[tag] = Propagator(grid, u, config.eps, j, fmax)
            P = props[tag]
            D = b - a
            if P.u is None:
                # exact heat propagation; sub-steps only for sampling
                m = max(1, config.heat_samples)
                for i in range(m):
                    c = P.step(c, D / m)
                    hist.record(a + D * (i + 1) / m, c, j, grid)
            else:
                dt = config.dt
                if config.cap_dt:
                    dt = min(dt, 0.5 * P.stable_dt())
                else:
                    _check_stability(P, dt, config)
                for i, h in enumerate(_step_sizes(D, dt)):
                    c = P.step(c, h)
                    nstep += 1
                    if config.clean_every and nstep % config.clean_every == 0:
                        c = leray_project(SpectralField(grid, c, j)).coeffs
                    if (i + 1) % config.sample_every == 0:
                        hist.record(min(a + dt * (i + 1), b), c, j, grid)
            hist.record(b, c, j, grid)
        if on_boundary is not None:
            on_boundary(b, SpectralField(grid, c.copy(), j))
    return SpectralField(grid, c, j), hist


# -- closed forms and rate estimators ---------------------------------------

def generation_amplitude(n: int, eps: float, t: float) -> float:
    x = eps * n * n
    return t if x * t < 1e-12 else -math.expm1(-x * t) / x


def analytic_generation_field(n: int, eps: float, t: float, grid: Grid3,
                              polarization=CLOSED_FORM_POLARIZATION) -> SpectralField:
    """(0,0,1) + phi(t) e^{inz} polarization, phi(t) = (1 - e^{-eps n^2 t}) / (eps n^2)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    B = SpectralField.constant(grid, (0, 0, 1))
    B.coeffs[(slice(None),) + grid.mode_index((0, 0, n))] = (
        generation_amplitude(n, eps, t) * np.asarray(polarization, dtype=complex)
    )
    return B


def fit_growth_rate(history: EnergyHistory, window) -> float:
    t, n = history.arrays()
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 8:
        raise ValueError(f"only {int(sel.sum())} samples in window {tuple(window)}; need >= 8")
    return float(np.polyfit(t[sel], np.log(n[sel]), 1)[0])


def limsup_rate(history: EnergyHistory, checkpoints) -> float:
    checkpoints = list(checkpoints)
    if not checkpoints:
        raise ValueError("limsup_rate needs at least one checkpoint")
    t, n = history.arrays()
    if t[0] != 0:
        raise ValueError("history must start at t = 0")
    rates = []
    for tc in checkpoints:
        if tc <= 0:
            raise ValueError("checkpoints must be positive times")
        rates.append(math.log(history.norm_at(tc) / n[0]) / tc)
    return max(rates)
