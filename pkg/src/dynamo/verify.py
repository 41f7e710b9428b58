"""Fast invariant suites run by ``dynamo verify``.  Every suite returns a check
record; ``run_all`` collects them under stable names."""
from __future__ import annotations

import math
import tempfile
from pathlib import Path

import numpy as np

from . import bloch
from .matrix import (
    ContourSpec, check, contour_projector, growth_dichotomy_check, perturbation_slopes,
)
from .solver import (
    SolverConfig, analytic_generation_field, simulate, step,
)
from .spectral import (
    Grid3, PhysicalField, SpectralField, backward_transform, curl_bloch, divergence_bloch,
    forward_transform, l2_norm, random_field, read_checkpoint, write_checkpoint,
)
from .velocity import (
    Generator, RescaledABC, Schedule, ScheduleParams, Zero, build_schedule, sample_velocity,
    tk_lower_bound,
)

SMALL = Grid3(8, 8, 8)


def parseval(rng) -> dict:
    F = random_field(SMALL, rng)
    rms = math.sqrt(float(np.mean(np.sum(np.abs(backward_transform(F).values) ** 2, axis=0))))
    return check(rms, l2_norm(F), 1e-12 * rms)


def transform_roundtrip(rng) -> dict:
    F = random_field(SMALL, rng)
    G = forward_transform(backward_transform(F))
    return check(0.0, float(np.abs(G.coeffs - F.coeffs).max()), 1e-12)


def div_curl(rng, curl=curl_bloch) -> dict:
    F = random_field(SMALL, rng, bloch_j=(0.1, -0.2, 0.3))
    return check(0.0, float(np.abs(divergence_bloch(curl(F))).max()), 1e-10)


def curl_oracle(rng=None, curl=curl_bloch) -> dict:
    """curl of e^{ix} e2 is i e^{ix} e3 (sign sensitive, unlike the quadratic identities)."""
    F = SpectralField.single_mode(SMALL, (1, 0, 0), (0, 1, 0))
    expect = SpectralField.single_mode(SMALL, (1, 0, 0), (0, 0, 1j))
    return check(0.0, float(np.abs(curl(F).coeffs - expect.coeffs).max()), 1e-14)


def checkpoint_roundtrip(rng) -> dict:
    F = random_field(Grid3(6, 4, 8), rng, bloch_j=(0.0, 0.0, 0.25))
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "s.kde1"
        write_checkpoint(p, F)
        G = read_checkpoint(p)
        same = np.array_equal(G.coeffs, F.coeffs) and np.array_equal(G.bloch_j, F.bloch_j)
        raw = bytearray(p.read_bytes())
        raw[0:4] = b"XXXX"
        p.write_bytes(bytes(raw))
        try:
            read_checkpoint(p)
            surfaced = False
        except ValueError:
            surfaced = True
    return check(True, same and surfaced, 0, passed=same and surfaced)


def heat_oracle(rng=None) -> dict:
    g = Grid3(4, 4, 4)
    B = SpectralField.single_mode(g, (1, 0, 0), (0, 1, 0))
    cfg = SolverConfig(dt=0.01, eps=0.01)
    for _ in range(1000):
        B = step(B, PhysicalField(g, np.zeros((3,) + g.shape)), cfg)
    return check(math.exp(-0.1), abs(B.mode((1, 0, 0))[1]), 1e-12)


def stationarity(rng=None) -> dict:
    g = Grid3(8, 8, 4)
    B = SpectralField.constant(g, (0, 0, 1))
    u = sample_velocity(RescaledABC(2, 1, 0.3), g)
    B1 = step(B, u, SolverConfig(dt=0.05, eps=0.25))
    return check(0.0, float(np.abs(B1.coeffs - B.coeffs).max()), 1e-12)


def mean_conservation(rng) -> dict:
    g = Grid3(8, 8, 4)
    B = random_field(g, rng, fmax=g.default_dealias())
    S = Schedule.from_durations([(0.3, Zero()), (1.0, RescaledABC(1, 2, 0.4)), (0.5, Generator(1))])
    F, h = simulate(S, B, SolverConfig(dt=0.02, eps=0.1, clean_every=10, warn_unstable=False), 1.8)
    drift = max(float(np.abs(m - h.mean[0]).max()) for m in h.mean)
    return check(0.0, drift, 1e-10)


def generation_closed_form(rng=None) -> dict:
    g = Grid3(4, 4, 4)
    eps = 1 / 16
    cfg = SolverConfig(dt=0.01, eps=eps)
    F, _ = simulate(Generator(1), SpectralField.constant(g, (0, 0, 1)), cfg, 1.0)
    ref = analytic_generation_field(1, eps, 1.0, g)
    return check(0.0, l2_norm(F - ref) / l2_norm(ref), 1e-6)


def projector_algebra(rng) -> dict:
    n = 6
    V = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    lam = np.array([1.0, 1.2, -1.0, -2.0, 3.0, 0.5j])
    A = V @ np.diag(lam) @ np.linalg.inv(V)
    P = contour_projector(A, ContourSpec(1.1, 0.3, 128))
    idem = np.linalg.norm(P @ P - P)
    comm = np.linalg.norm(P @ A - A @ P) / np.linalg.norm(A)
    tr = abs(np.trace(P) - 2)
    err = max(idem, comm, tr)
    return check(0.0, float(err), 1e-8)


def quadrature_convergence(rng=None) -> dict:
    A = np.diag([1.0, 2.0, 3.0])
    exact = np.diag([1.0, 0.0, 0.0])
    errs = [float(np.abs(contour_projector(A, ContourSpec(1.0, 0.5, m)) - exact).max()) for m in (16, 32, 64)]
    ok = all(e1 <= 1e-12 or e1 <= e0 / 100 for e0, e1 in zip(errs, errs[1:]))
    return check(0.0, errs[-1], 1e-12, passed=ok, errors=errs)


def dichotomy_random(rng) -> dict:
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    A = Q @ np.diag([0.4, -0.3, -0.8, -1.0, -1.5]) @ Q.T
    return growth_dichotomy_check(A, rng.standard_normal(5), 60.0)


def slopes_linear(rng=None) -> dict:
    return perturbation_slopes(np.zeros((3, 3)), np.diag([1.0, 2.0, 3.0]), 0.0, [0.1, 0.01])


def alpha_eigenvalues(rng=None) -> dict:
    d = 0.1
    return check(0.0, bloch.eigenvalue_set_error(bloch.assemble_M(d).eigenvalues, d), 10 * d ** 3)


def schedule_bound(rng=None) -> dict:
    p = ScheduleParams(n0=4, delta=0.2, lambda_hat=1e-3, K=3)
    S = build_schedule(p)
    gaps = [t - tk_lower_bound(n, p, tp) for n, tp, t in zip(S.ns, S.times[:-1], S.times[1:])]
    return check(0.0, min(gaps), 0.0, passed=min(gaps) >= 0 and S.ns == [1, 1, 2])


def determinism(rng=None) -> dict:
    g = Grid3(8, 8, 4)
    S = Schedule.from_durations([(0.5, Zero()), (1.0, RescaledABC(1, 2, 0.3))], periodic=True)
    B = random_field(g, np.random.default_rng(7), fmax=g.default_dealias())
    cfg = SolverConfig(dt=0.05, eps=0.2)
    a = simulate(S, B, cfg, 3.0)[1].to_csv()
    b = simulate(S, B.copy(), cfg, 3.0)[1].to_csv()
    return check(True, a == b, 0, passed=a == b)


SUITES = {
    "parseval": parseval,
    "transform_roundtrip": transform_roundtrip,
    "div_curl": div_curl,
    "curl_oracle": curl_oracle,
    "checkpoint": checkpoint_roundtrip,
    "heat_oracle": heat_oracle,
    "stationarity": stationarity,
    "mean_conservation": mean_conservation,
    "generation_closed_form": generation_closed_form,
    "projector_algebra": projector_algebra,
    "quadrature_convergence": quadrature_convergence,
    "growth_dichotomy": dichotomy_random,
    "perturbation_slopes": slopes_linear,
    "alpha_eigenvalues": alpha_eigenvalues,
    "schedule_bound": schedule_bound,
    "determinism": determinism,
}


def run_all(seed: int = 0, suites=None) -> dict:
    out = {}
    for name, fn in (suites or SUITES).items():
        rng = np.random.default_rng([seed, len(name)])
        out[name] = fn(rng)
    return out
