import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynamo.solver import (
    CSV_HEADER, EnergyHistory, Propagator, SolverConfig, StabilityWarning, analytic_generation_field,
    coset_blocks, default_dt, fit_growth_rate, generation_amplitude, limsup_rate, rhs_advect_stretch,
    simulate, step,
)
from dynamo.spectral import (
    Grid3, PhysicalField, SpectralField, divergence_bloch, l2_norm, leray_project, random_field,
)
from dynamo.velocity import (
    ABC, Generator, RescaledABC, Schedule, Zero, max_gradient_norm, sample_velocity,
)


def zero_u(g):
    return PhysicalField(g, np.zeros((3,) + g.shape))


def solenoidal(g, seed, j=None):
    F = random_field(g, np.random.default_rng(seed), bloch_j=j, fmax=g.default_dealias())
    return leray_project(F)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0, eps=1)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, eps=0)


def test_rhs_generator_forcing():
    g = Grid3(4, 4, 4)
    out = rhs_advect_stretch(SpectralField.constant(g, (0, 0, 1)), sample_velocity(Generator(1), g))
    assert out.mode((0, 0, 1)) == pytest.approx([-1j, 1, 0])
    out.coeffs[:, 0, 0, 1] = 0
    assert np.abs(out.coeffs).max() < 1e-14


def test_rhs_zero_velocity_and_grid_mismatch():
    g = Grid3(4, 4, 4)
    B = random_field(g, np.random.default_rng(0))
    assert np.abs(rhs_advect_stretch(B, zero_u(g)).coeffs).max() == 0
    with pytest.raises(ValueError):
        rhs_advect_stretch(B, zero_u(Grid3(6, 4, 4)))


@pytest.mark.parametrize("dt", [0.3, 1.7])
def test_heat_step_exact(dt):
    g = Grid3(6, 6, 6)
    B = SpectralField.single_mode(g, (1, 2, 0), (0, 0, 1))
    B1 = step(B, zero_u(g), SolverConfig(dt=dt, eps=0.2))
    assert B1.mode((1, 2, 0))[2] == pytest.approx(math.exp(-0.2 * 5 * dt), abs=1e-14)


def test_heat_decay_long_run():
    g = Grid3(4, 4, 4)
    B = SpectralField.single_mode(g, (1, 0, 0), (0, 1, 0))
    cfg = SolverConfig(dt=0.01, eps=0.01)
    for _ in range(1000):
        B = step(B, zero_u(g), cfg)
    assert abs(B.mode((1, 0, 0))[1] - 0.904837418035959573) <= 1e-12


def test_stationary_mean_under_rescaled_abc():
    g = Grid3(14, 14, 4)
    B = SpectralField.constant(g, (0, 0, 1))
    u = sample_velocity(RescaledABC(2, 2, 0.3), g)
    cfg = SolverConfig(dt=0.1, eps=1 / 16)
    for _ in range(5):
        B1 = step(B, u, cfg)
        assert np.abs(B1.coeffs - B.coeffs).max() <= 1e-12
        B = B1


def test_stability_warning():
    g = Grid3(8, 8, 4)
    u = sample_velocity(ABC(0.9), g)
    with pytest.warns(StabilityWarning):
        step(SpectralField.constant(g, (0, 0, 1)), u, SolverConfig(dt=5.0, eps=1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        step(SpectralField.constant(g, (0, 0, 1)), u, SolverConfig(dt=default_dt(g, ABC(0.9)), eps=1.0))


def test_generation_matches_closed_form():
    g = Grid3(4, 4, 4)
    eps = 1 / 1024
    F, _ = simulate(Generator(1), SpectralField.constant(g, (0, 0, 1)), SolverConfig(dt=0.05, eps=eps), 1.0)
    ref = analytic_generation_field(1, eps, 1.0, g)
    assert l2_norm(F - ref) / l2_norm(ref) < 1e-6


def test_generation_fourth_order():
    g = Grid3(4, 4, 4)
    eps = 0.3
    ref = analytic_generation_field(1, eps, 1.0, g)
    errs = []
    for dt in (0.5, 0.25, 0.125):
        F, _ = simulate(Generator(1), SpectralField.constant(g, (0, 0, 1)),
                        SolverConfig(dt=dt, eps=eps, warn_unstable=False), 1.0)
        errs.append(l2_norm(F - ref) / l2_norm(ref))
    for a, b in zip(errs, errs[1:]):
        assert b <= 1e-12 or a / b >= 8


def test_generation_amplitude():
    assert generation_amplitude(1, 0.1, 1.0) == pytest.approx(10 * (1 - math.exp(-0.1)))
    assert generation_amplitude(1, 0.1, 1.0) == pytest.approx(0.951626, abs=1e-6)
    for x in (1 / 1024, 0.25, 1.0):
        assert 0.5 <= generation_amplitude(1, x, 1.0) <= 1
    assert l2_norm(analytic_generation_field(1, 0.1, 0.0, Grid3(4, 4, 4))) == 1.0
    with pytest.raises(ValueError):
        analytic_generation_field(1, 0.1, -1.0, Grid3(4, 4, 4))


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.05, 0.9), st.floats(0.05, 1.0))
def test_run_invariants(seed, delta, eps):
    g = Grid3(8, 8, 4)
    B = solenoidal(g, seed)
    S = Schedule.from_durations([(0.5, Zero()), (1.0, ABC(delta)), (0.5, Generator(1))])
    cfg = SolverConfig(dt=0.02, eps=eps, clean_every=0, warn_unstable=False)
    F, h = simulate(S, B, cfg, 2.0)
    m0 = h.mean[0]
    assert max(np.abs(m - m0).max() for m in h.mean) <= 1e-10
    assert max(h.div) <= 1e-8
    grad = max(max_gradient_norm(ABC(delta)), max_gradient_norm(Generator(1)))
    t, n = h.arrays()
    assert np.all(np.log(n / n[0]) <= (grad + 0.01) * t + 1e-12)
    assert np.all(np.diff(t) > 0)


def test_cleaning_keeps_divergence_tiny():
    g = Grid3(8, 8, 4)
    F, h = simulate(ABC(0.5), solenoidal(g, 1), SolverConfig(dt=0.05, eps=0.5, clean_every=100), 20.0)
    assert np.sqrt(np.sum(np.abs(divergence_bloch(F)) ** 2)) <= 1e-12


def test_heat_phase_contraction():
    g = Grid3(6, 6, 6)
    B = SpectralField.constant(g, (0, 0, 1)) + SpectralField.single_mode(g, (0, 1, 1), (1, 0, 0))
    F, h = simulate(Zero(), B, SolverConfig(dt=0.1, eps=0.05), 3.0)
    fluct = F - SpectralField.constant(g, (0, 0, 1))
    assert l2_norm(fluct) == pytest.approx(math.exp(-0.05 * 3.0 * 2), rel=1e-13)
    assert np.all(np.diff(h.norm) <= 0)


def test_energy_history_csv_roundtrip():
    g = Grid3(6, 6, 4)
    _, h = simulate(ABC(0.3), solenoidal(g, 2) + SpectralField.constant(g, (0, 0, 1)),
                    SolverConfig(dt=0.1, eps=0.3, sample_every=3), 2.0)
    text = h.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    h2 = EnergyHistory.from_csv(text)
    assert h2.t == h.t and h2.norm == h.norm and h2.div == h.div
    assert all(np.array_equal(a, b) for a, b in zip(h.mean, h2.mean))
    assert h2.to_csv() == text


def test_fit_growth_rate():
    h = EnergyHistory(t=list(np.linspace(0, 10, 50)))
    h.norm = list(np.exp(0.5 * np.array(h.t)))
    assert fit_growth_rate(h, (0, 10)) == pytest.approx(0.5, abs=1e-10)
    h.norm = [2.0] * 50
    assert fit_growth_rate(h, (0, 10)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_growth_rate(h, (0, 0.5))


def test_fit_heat_rate():
    g = Grid3(4, 4, 4)
    B = SpectralField.single_mode(g, (1, 0, 0), (0, 1, 0))
    _, h = simulate(Zero(), B, SolverConfig(dt=0.1, eps=0.01, heat_samples=40), 10.0)
    assert fit_growth_rate(h, (0, 10)) == pytest.approx(-0.01, abs=1e-6)


def test_limsup_rate():
    h = EnergyHistory(t=list(np.linspace(0, 10, 11)))
    h.norm = list(np.exp(0.3 * np.array(h.t)))
    assert limsup_rate(h, [2.5, 7.0, 10.0]) == pytest.approx(0.3)
    # growth only at the end of each segment: the last checkpoint wins
    h.norm = [1, 1, 1, 1, math.e, math.e, math.e, math.e, math.e, math.e, math.e ** 4]
    assert limsup_rate(h, [4, 10]) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        limsup_rate(h, [])
    with pytest.raises(ValueError):
        limsup_rate(h, [11.0])


def test_schedule_horizon_enforced():
    g = Grid3(4, 4, 4)
    S = Schedule.from_durations([(1.0, Zero())])
    with pytest.raises(ValueError, match="horizon"):
        simulate(S, SpectralField.constant(g, (0, 0, 1)), SolverConfig(dt=0.1, eps=1), 2.0)


def test_boundary_callback_and_short_final_step():
    g = Grid3(4, 4, 4)
    seen = []
    S = Schedule.from_durations([(0.25, Zero()), (0.33, ABC(0.2))])
    _, h = simulate(S, SpectralField.constant(g, (0, 0, 1)), SolverConfig(dt=0.1, eps=1, sample_every=1),
                    0.58, on_boundary=lambda t, F: seen.append(t))
    assert seen == [0.25, 0.58]
    assert h.t[-1] == 0.58 and h.t[-2] == pytest.approx(0.55)


def test_propagator_batch_matches_single():
    g = Grid3(6, 6, 4)
    P = Propagator(g, sample_velocity(ABC(0.4), g), 0.5)
    X = np.stack([solenoidal(g, s).coeffs for s in range(3)])
    Y = P.step(X, 0.1)
    for i in range(3):
        assert np.allclose(Y[i], P.step(X[i], 0.1), atol=1e-15)


def test_lattice_reduction_matches_full_grid():
    g = Grid3(26, 26, 4)
    tag = RescaledABC(1, 8, 0.3)
    rng = np.random.default_rng(5)
    B = SpectralField.constant(g, (0, 0, 1))
    for k in [(0, 0, 1), (8, 0, 1), (3, -2, 0), (-5, 8, 1)]:
        B.coeffs[(slice(None),) + g.mode_index(k)] = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    blocks = coset_blocks(B.coeffs, g, g.default_dealias(), 8)
    assert sorted(b.key for b in blocks) == [(0, 0, 0), (0, 0, 1), (3, -2, 0), (3, 0, 1)]
    runs = []
    for reduce in (False, True):
        cfg = SolverConfig(dt=0.05, eps=1 / 64, reduce_lattice=reduce, clean_every=7, sample_every=4)
        runs.append(simulate(tag, B, cfg, 3.0))
    (F0, h0), (F1, h1) = runs
    assert np.abs(F0.coeffs - F1.coeffs).max() < 1e-13
    assert h0.t == h1.t
    assert np.allclose(h0.norm, h1.norm, rtol=1e-13)
    assert np.allclose(h0.div, h1.div, atol=1e-13)
    assert np.allclose(np.array(h0.mean), np.array(h1.mean), atol=1e-14)


def test_lattice_reduction_falls_back():
    g = Grid3(26, 26, 4)
    B = random_field(g, np.random.default_rng(0))  # content beyond the dealias limit
    assert coset_blocks(B.coeffs, g, g.default_dealias(), 8) is None
    cfg = SolverConfig(dt=0.05, eps=1 / 64, reduce_lattice=True, max_cosets=2)
    B = solenoidal(g, 3)
    F, _ = simulate(RescaledABC(1, 8, 0.3), B, cfg, 0.2)
    G, _ = simulate(RescaledABC(1, 8, 0.3), B, SolverConfig(dt=0.05, eps=1 / 64), 0.2)
    assert np.array_equal(F.coeffs, G.coeffs)
