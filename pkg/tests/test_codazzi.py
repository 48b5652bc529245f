import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from framediv.codazzi import (
    BUILTIN_FIELDS,
    SymmetricTensorField,
    builtin_field,
    codazzi_residual,
    codazzi_strip,
    covariant_derivative,
    covariant_derivative_coordinates,
    eigenframe,
    flat_box,
    sigma_n_strip,
    sigma_nm1_strip,
    swapped_linear_field,
    triple_sum,
    twisted_field,
    verify_codazzi_eigen_identities,
    verify_eigen_derivative_identities,
    verify_eigenframe_gradient_formulas,
)
from framediv.errors import DegenerateSpectrum, HypothesisViolated, NotCodazzi
from framediv.geometry import orthonormal_frame, round_sphere, warped_torus3
from framediv.sympoly import elementary_symmetric


@pytest.fixture(scope="module")
def strip_n():
    return sigma_n_strip()


@pytest.fixture(scope="module")
def strip_nm1():
    return sigma_nm1_strip()


def grid(field, k=4):
    return field.metric.sample_grid(k)


# -- covariant derivative -------------------------------------------------------------


@pytest.mark.parametrize("metric", [round_sphere(2), warped_torus3()], ids=["sphere", "warped"])
def test_metric_tensor_is_parallel(metric):
    field = SymmetricTensorField.from_metric(metric, 2.5)
    x = metric.sample_grid(5)
    cov = covariant_derivative(field, x)
    assert np.max(np.abs(cov.a_ijk)) < 1e-8
    assert np.max(np.abs(covariant_derivative_coordinates(field, x))) < 1e-8


def test_frame_and_coordinate_derivatives_agree_on_curved_metric():
    m = warped_torus3()
    field = SymmetricTensorField.from_expressions(
        [["sin(x1) + x2", "cos(x3)", "0"], ["0", "2 + x1 x3", "sin(x2)"], ["0", "0", "exp(cos(x1))"]], m
    )
    x = m.sample_grid(4)
    cov = covariant_derivative(field, x)
    coord = covariant_derivative_coordinates(field, x)  # [N, a, b, c]: (nabla_c a)_ab
    E = orthonormal_frame(m, x).frame
    framed = np.einsum("nabc,nai,nbj,nck->nijk", coord, E, E, E)
    np.testing.assert_allclose(cov.a_ijk, framed, atol=1e-7)
    assert np.max(cov.symmetry_residual) < 1e-12


@st.composite
def quadratic_cubic_potential(draw):
    """Random cubic polynomial potential in three variables (its Hessian is Codazzi on flat space)."""
    c2 = draw(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
    c3 = draw(st.lists(st.floats(-1, 1), min_size=10, max_size=10))
    return c2, c3


@settings(max_examples=15)
@given(quadratic_cubic_potential())
def test_hessians_are_codazzi_on_flat_space(coeffs):
    c2, c3 = coeffs
    idx2 = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    idx3 = [(i, j, k) for i in range(3) for j in range(i, 3) for k in range(j, 3)]

    def hess(x):
        H = np.zeros(x.shape[:-1] + (3, 3))
        for c, (i, j) in zip(c2, idx2):
            H[..., i, j] += c
            H[..., j, i] += c
        for c, (i, j, k) in zip(c3, idx3):
            # d_a d_b (x_i x_j x_k)
            for a in range(3):
                for b in range(3):
                    term = np.zeros(x.shape[:-1])
                    for p, q, r in [(i, j, k), (j, k, i), (k, i, j)]:
                        for (u, v, w) in [(p, q, r), (p, r, q)]:
                            if u == a and v == b:
                                term = term + x[..., w]
                    H[..., a, b] += c * term
        return H

    field = SymmetricTensorField(a=hess, metric=flat_box(3), name="hessian")
    x = flat_box(3).sample_grid(3)
    assert np.max(codazzi_residual(field, x)) < 1e-8


@settings(max_examples=15)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_constant_field_on_flat_space_is_parallel(entries):
    A = np.zeros((3, 3))
    A[np.triu_indices(3)] = entries
    A = A + np.triu(A, 1).T
    field = SymmetricTensorField(a=lambda x: np.broadcast_to(A, x.shape[:-1] + (3, 3)), metric=flat_box(3))
    cov = covariant_derivative(field, flat_box(3).sample_grid(3))
    assert np.max(np.abs(cov.a_ijk)) < 1e-10


# -- non-Codazzi fixtures -------------------------------------------------------------------


def test_swapped_linear_field_is_rejected():
    field = swapped_linear_field(4)
    x = grid(field, 3)
    assert np.min(codazzi_residual(field, x)) > 0.99
    with pytest.raises(NotCodazzi) as info:
        verify_codazzi_eigen_identities(field, x)
    assert info.value.residual > 0.01


def test_diag_x1_x2_is_a_hessian_and_codazzi():
    field = SymmetricTensorField.from_expressions(["x1", "x2", "0", "0"], flat_box(4))
    assert np.max(codazzi_residual(field, flat_box(4).sample_grid(3))) < 1e-10


def test_twisted_field_has_nonzero_triple_sum():
    field = twisted_field(4)
    x = field.metric.random_points(np.random.default_rng(0), 300)
    eig = eigenframe(field, x)
    ts = triple_sum(eig.gamma)
    assert np.min(np.abs(ts)) > 0.01
    assert np.min(codazzi_residual(field, x)) > 0.01
    # identities valid for every symmetric field still hold
    assert verify_eigen_derivative_identities(field, x).passed


def test_twisted_field_fails_gradient_formulas_precondition():
    field = twisted_field(4)
    with pytest.raises((NotCodazzi, HypothesisViolated)):
        verify_eigenframe_gradient_formulas(field, grid(field, 3), "sigma_n_varies")


# -- eigenframes ------------------------------------------------------------------------------


def test_eigenframe_of_constant_diagonal_field():
    field = builtin_field("constant-diag-3")
    eig = eigenframe(field, np.array([0.1, 0.2, 0.3]))
    np.testing.assert_allclose(eig.lambdas, [1, 2, 3])
    np.testing.assert_allclose(np.abs(eig.eigenframe), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(eig.lambda_grad, 0.0, atol=1e-10)
    assert eig.spectrum.n == 3


def test_degenerate_field_raises():
    field = SymmetricTensorField.from_expressions(["1", "1", "2"], flat_box(3))
    with pytest.raises(DegenerateSpectrum):
        eigenframe(field, np.zeros(3))


@pytest.mark.parametrize("fixture", ["strip_n", "strip_nm1"])
def test_strip_eigenframe_is_orthonormal_and_diagonalising(fixture, request):
    strip = request.getfixturevalue(fixture)
    x = grid(strip.field, 3)
    eig = eigenframe(strip.field, x)
    g = strip.field.metric.g(x)
    E = eig.eigenframe
    np.testing.assert_allclose(np.swapaxes(E, -1, -2) @ g @ E, np.broadcast_to(np.eye(4), g.shape), atol=1e-12)
    assert np.max(eig.diagonal_residual) < 1e-12
    # Gamma_ij^k is skew in (j, k); the residual is finite-difference truncation, O(h^2)
    np.testing.assert_allclose(eig.gamma, -np.swapaxes(eig.gamma, -1, -2), atol=1e-6)


# -- strips and identities ------------------------------------------------------------------------


def test_sigma_n_strip_has_constant_lower_sigmas(strip_n):
    x = grid(strip_n.field, 5)
    sigma = elementary_symmetric(eigenframe(strip_n.field, x).lambdas)
    assert np.max(np.std(sigma[:, :3], axis=0)) < 1e-12
    assert np.std(sigma[:, 3]) > 0.1


def test_sigma_nm1_strip_warps_match_closed_form(strip_nm1):
    # with the zero eigenvalue on d/dx1 the warps solve f_i'/f_i = -lambda_i'/lambda_i
    t = np.linspace(-6.15, -5.85, 7)
    lam = strip_nm1.eigenvalues(t)
    nz = lam[:, np.abs(lam[0]) > 1e-12]
    f = strip_nm1.warps(t)
    ratio = f * nz / (f[0] * nz[0])
    np.testing.assert_allclose(ratio, 1.0, atol=1e-10)


@pytest.mark.parametrize("fixture", ["strip_n", "strip_nm1"])
def test_strips_are_codazzi(fixture, request):
    strip = request.getfixturevalue(fixture)
    assert np.max(codazzi_residual(strip.field, grid(strip.field, 4))) < 1e-6


@pytest.mark.parametrize("fixture", ["strip_n", "strip_nm1"])
def test_eigen_identities_on_strips(fixture, request):
    strip = request.getfixturevalue(fixture)
    x = grid(strip.field, 4)
    assert verify_eigen_derivative_identities(strip.field, x).passed
    rs = verify_codazzi_eigen_identities(strip.field, x, tolerance=1e-5)
    assert rs["diagonal-connection"].max_residual < 1e-5
    assert rs["triple-sum"].max_residual < 1e-7
    assert rs["triple-sum"].metadata["codazzi_max"] < 1e-6


@pytest.mark.parametrize("fixture, mode", [("strip_n", "sigma_n_varies"), ("strip_nm1", "sigma_nm1_varies")])
def test_gradient_formulas_on_strips(fixture, mode, request):
    strip = request.getfixturevalue(fixture)
    rs = verify_eigenframe_gradient_formulas(strip.field, grid(strip.field, 4), mode)
    assert rs.identities == ["lambda-gradient", "gamma-gradient", "x-gradient", "psi-quadratic"]
    for r in rs:
        assert r.max_residual < 1e-5, (r.identity, r.max_residual)
    assert rs[0].metadata["gradient_max"] > 0.1  # the identities are not trivially 0 = 0


def test_gradient_formulas_reject_wrong_mode(strip_n):
    with pytest.raises(HypothesisViolated):
        verify_eigenframe_gradient_formulas(strip_n.field, grid(strip_n.field, 3), "sigma_nm1_varies")
    with pytest.raises(ValueError):
        verify_eigenframe_gradient_formulas(strip_n.field, grid(strip_n.field, 3), "bogus")


def test_strip_rejects_range_outside_interval():
    with pytest.raises(ValueError):
        codazzi_strip("x^3-3x", (1.0, 3.0))


@settings(max_examples=6)
@given(st.floats(-1.8, 1.0), st.floats(0.2, 0.7))
def test_random_cubic_strips_satisfy_identities(t0, length):
    strip = codazzi_strip("x^3-3x", (t0, t0 + length), degree=32)
    x = strip.field.metric.sample_grid(4)
    rs = verify_codazzi_eigen_identities(strip.field, x, tolerance=1e-5)
    assert rs.passed, rs.max_residuals()


def test_builtin_registry():
    assert set(BUILTIN_FIELDS) >= {"strip-sigma-n", "strip-sigma-nm1", "swapped-linear-4", "twisted-4"}
    with pytest.raises(KeyError):
        builtin_field("nope")
