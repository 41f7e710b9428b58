import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynamo import bloch
from dynamo.spectral import (
    Grid3, PhysicalField, SpectralField, backward_transform, forward_transform, l2_norm, mean,
    random_field,
)

G = bloch.DEFAULT_S_GRID


def test_s_of_e3_is_second_order():
    for d in (0.05, 0.1, 0.2):
        S = bloch.solve_S([0, 0, 1], d)
        assert l2_norm(S) <= 2 * d ** 2


def test_s_of_e1_leading_term():
    x, y, z = G.points
    vals = np.zeros((3,) + G.shape, complex)
    vals[1] = np.cos(x) * np.ones(G.shape)
    vals[2] = -np.sin(x) * np.ones(G.shape)
    lead = forward_transform(PhysicalField(G, vals))
    first = bloch.first_order_S([1, 0, 0], 1.0)
    assert np.allclose(first.coeffs, lead.coeffs, atol=1e-14)
    ratios = []
    for d in (0.05, 0.1, 0.2):
        S = bloch.solve_S([1, 0, 0], d)
        ratios.append(l2_norm(S - lead * d) / d ** 2)
    assert max(ratios) < 2


def test_s_expansion_ratio_bounded():
    deltas = np.round(np.arange(0.01, 0.201, 0.01), 2)
    for v in np.eye(3):
        r = [l2_norm(bloch.solve_S(v, d) - bloch.first_order_S(v, d)) / d ** 2 for d in deltas]
        assert max(r) < 2
        # no growth as delta shrinks: the small-delta half never exceeds the large-delta half
        assert max(r[:10]) <= max(r[10:]) * 1.05


@settings(max_examples=10, deadline=None)
@given(st.floats(0.01, 0.3), st.tuples(*[st.floats(-1, 1)] * 6))
def test_solve_s_contract(d, parts):
    v = np.array(parts[:3]) + 1j * np.array(parts[3:])
    if np.linalg.norm(v) < 1e-3:
        v = np.array([1.0, 0, 0])
    S, info = bloch.solve_S(v, d, full_output=True)
    assert np.abs(mean(S)).max() < 1e-15
    assert info.residual <= 1e-10 * np.linalg.norm(v)
    assert info.contraction <= 2 * d
    assert l2_norm(S) <= 2 * d * np.linalg.norm(v)


def test_solve_s_rejects_bad_delta():
    with pytest.raises(ValueError):
        bloch.solve_S([1, 0, 0], 1.2)


def test_riesz_p():
    H = SpectralField.constant(G, (0, 0, 1))
    P = bloch.riesz_P(H, 0.1)
    assert l2_norm(P - H) <= 2 * 0.1 ** 2
    PP = bloch.riesz_P(P, 0.1)
    assert np.abs(PP.coeffs - P.coeffs).max() < 1e-9
    Z = random_field(G, np.random.default_rng(0))
    Z.coeffs[:, 0, 0, 0] = 0
    assert np.abs(bloch.riesz_P(Z, 0.1).coeffs).max() == 0


@pytest.mark.parametrize("d", [0.05, 0.1, 0.2])
def test_alpha_matrix_eigenvalues(d):
    M = bloch.assemble_M(d)
    assert bloch.eigenvalue_set_error(M.eigenvalues, d) <= 10 * d ** 3
    assert np.abs(M.matrix[:, 2]).max() <= 10 * d ** 3
    assert np.abs(M.matrix[2, :]).max() <= 10 * d ** 3


def test_alpha_matrix_pattern_and_sign():
    d = 0.1
    M = bloch.assemble_M(d).matrix
    # the off-diagonal block is purely imaginary, +-i d^2, with the opposite sign to the closed form
    assert abs(M[0, 1].real) < 1e-12 and abs(M[1, 0].real) < 1e-12
    assert M[0, 1] == pytest.approx(1j * d ** 2, abs=10 * d ** 3)
    assert M[1, 0] == pytest.approx(-1j * d ** 2, abs=10 * d ** 3)


def test_m0_closed_form():
    M0 = bloch.m0_closed_form(0.1)
    assert np.allclose(np.abs(M0.matrix[:2, :2]), [[0, 0.01], [0.01, 0]])
    assert bloch.eigenvalue_set_error(M0.eigenvalues, 0.1) < 1e-15
    assert np.array_equal(M0.matrix, M0.matrix.conj().T)
    d = json.loads(json.dumps(M0.to_dict()))
    assert len(d["matrix"]) == 3 and len(d["eigenvalues"]) == 3


def test_bloch_matrix_heat_limit():
    B = bloch.assemble_bloch_matrix(0.0, 0.3, K=3)
    A = B.dense()
    assert B.dim == 147 == A.shape[0]
    assert np.count_nonzero(A - np.diag(np.diag(A))) == 0
    row = B.mode_row(1, 2, -1)
    assert A[row, row] == pytest.approx(-(4 + 1 + 0.09))
    with pytest.raises(ValueError):
        bloch.assemble_bloch_matrix(0.1, 0.1, K=1)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.001, 0.5), st.integers(0, 2 ** 31))
def test_matrix_free_agrees_with_matrix(d, j, seed):
    K = 3
    B = bloch.assemble_bloch_matrix(d, j, K)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(B.dim) + 1j * rng.standard_normal(B.dim)
    H = B.to_field(x, bloch.bloch_grid(K))
    y = bloch.apply_bloch_operator(H, d)
    # the operator output reaches one mode further than the truncation
    assert np.allclose(B.from_field(y), B.dense() @ x, atol=1e-10)


def test_constant_field_at_zero_delta():
    g = bloch.bloch_grid(2)
    H = SpectralField.constant(g, (1, 2, 3), bloch_j=(0, 0, 0.2))
    out = bloch.apply_bloch_operator(H, 0.0)
    assert np.allclose(out.coeffs, -0.04 * H.coeffs)


def test_leading_mode_heat():
    rep = bloch.leading_bloch_mode(0.0, 0.1, K=2)
    assert rep.leading == pytest.approx(-0.01)


def test_leading_mode_residual_and_alignment():
    d = 0.2
    rep = bloch.leading_bloch_mode(d, 0.01, K=4)
    assert rep.residuals[0] <= 1e-8
    B = bloch.assemble_bloch_matrix(d, 0.01, 4)
    H = B.to_field(rep.vector, bloch.bloch_grid(4))
    out = bloch.apply_bloch_operator(H, d)
    assert np.linalg.norm(B.from_field(out) - rep.leading * rep.vector) <= 1e-7
    w, V = np.linalg.eig(bloch.assemble_M(d).matrix)
    v = V[:, np.argmin(np.abs(w - d ** 2))]
    m = rep.mean_vector
    cosang = abs(np.vdot(v, m)) / (np.linalg.norm(v) * np.linalg.norm(m))
    assert np.arccos(min(1.0, cosang)) <= 0.2


def test_leading_mode_stable_in_K():
    d, j = 0.2, 0.02
    p = [bloch.leading_bloch_mode(d, j, K).leading for K in (4, 6, 8)]
    assert abs(p[0] - p[1]) <= 1e-10 and abs(p[1] - p[2]) <= 1e-10


def test_power_iteration_agrees_with_dense():
    d, j = 0.2, 0.01
    dense = bloch.leading_bloch_mode(d, j, K=4).leading
    power = bloch.leading_bloch_mode(d, j, K=4, max_dense=10)
    assert power.method == "power"
    assert abs(power.leading.real - dense.real) <= 0.01 * abs(dense.real)


def test_zero_mean_data_decay():
    # projecting out the mean direction leaves only modes decaying at rate >= 1 - O(delta)
    d, j, K = 0.2, 0.05, 4
    B = bloch.assemble_bloch_matrix(d, j, K)
    w = np.linalg.eigvals(B.dense())
    w = w[np.argsort(-w.real)]
    assert np.all(w[3:].real <= -0.5)


def test_predicted_rate():
    assert bloch.predicted_alpha_rate(0.3, 0.04) == pytest.approx(0.002)
    js = np.linspace(0.001, 0.09, 500)
    vals = [bloch.predicted_alpha_rate(0.3, j) for j in js]
    assert js[int(np.argmax(vals))] == pytest.approx(0.045, abs=2e-4)
    assert max(vals) == pytest.approx(0.3 ** 4 / 4, rel=1e-4)
    assert bloch.predicted_alpha_rate(0.3, 0.09) <= 0


def test_growth_datum():
    g = Grid3(4, 4, 4)
    closed = bloch.growth_initial_datum(0.2, g, convention="closed_form")
    assert closed.mode((0, 0, 1)) == pytest.approx([-1j, 1, 0])
    numeric = bloch.growth_initial_datum(0.2, g)
    assert numeric.mode((0, 0, 1)) == pytest.approx([1j, 1, 0], abs=1e-6)
    for B in (closed, numeric):
        assert l2_norm(B) == pytest.approx(np.sqrt(3), abs=1e-6)
        assert mean(B) == pytest.approx([0, 0, 1])


def test_rescaling_trivial_and_small():
    rep1 = bloch.rescaling_check(0.3, 2, 1, 1.0, dt=0.1)
    assert rep1.max_rel_diff == 0.0
    rep = bloch.rescaling_check(0.3, 2, 2, 2.0, dt=0.1)
    assert rep.norms_1[0] == pytest.approx(rep.norms_n[0])
    assert rep.passed


def test_reports_serialize():
    rep = bloch.leading_bloch_mode(0.1, 0.01, K=2)
    d = json.loads(bloch.report_json(rep))
    assert d["eigenvalues"][0][0] == pytest.approx(rep.leading.real)
