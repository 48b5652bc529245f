import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from framediv.codazzi import codazzi_residual
from framediv.errors import BadParameters, RankDeficient
from framediv.hypersurface import (
    BUILTIN_IMMERSIONS,
    CLIFFORD_NAMES,
    Immersion,
    builtin_immersion,
    clifford_torus,
    equatorial_sphere,
    gauss_scalar,
    intrinsic_scalar,
    is_isoparametric_fixture,
    isoparametric_check,
    perturbed_clifford,
    shape_field,
    shape_sample,
    small_sphere,
)
from framediv.sympoly import elementary_symmetric


def clifford_expected(p, q, r):
    s = math.sqrt(1 - r * r)
    return np.sort([-s / r] * p + [r / s] * q)


def matches_up_to_sign(principal, expected, atol):
    a = np.sort(principal, axis=-1)
    return min(np.max(np.abs(a - expected)), np.max(np.abs(a - np.sort(-expected)))) < atol


@settings(max_examples=12)
@given(st.integers(1, 2), st.integers(1, 2), st.floats(0.2, 0.9))
def test_clifford_principal_curvatures(p, q, r):
    imm = clifford_torus(p, q, r)
    x = imm.sample_grid(3)
    sample = shape_sample(imm, x)
    assert matches_up_to_sign(sample.principal, clifford_expected(p, q, r), 1e-8)
    assert np.max(imm.unit_defect(x)) < 1e-14
    assert np.max(sample.self_adjoint_residual) < 1e-10


@settings(max_examples=10)
@given(st.integers(1, 3), st.integers(1, 3), st.floats(0.1, 0.95))
def test_clifford_mean_curvatures_are_normalised_sigmas(p, q, r):
    imm = clifford_torus(p, q, r)
    sample = shape_sample(imm, imm.sample_grid(2))
    n = p + q
    binom = np.array([math.comb(n, k) for k in range(1, n + 1)])
    np.testing.assert_allclose(sample.H, elementary_symmetric(sample.principal) / binom)


def test_minimal_clifford_torus():
    for p, q in [(1, 1), (1, 2), (2, 2)]:
        imm = clifford_torus(p, q, math.sqrt(p / (p + q)))
        sample = shape_sample(imm, imm.sample_grid(3))
        assert np.max(np.abs(sample.H[:, 0])) < 1e-10


def test_gauss_scalar_formula():
    imm = clifford_torus(2, 2, 1 / math.sqrt(2))
    sample = shape_sample(imm, imm.sample_grid(2))
    lam = sample.principal
    expected = 12 + lam.sum(-1) ** 2 - (lam**2).sum(-1)
    np.testing.assert_allclose(gauss_scalar(sample), expected)
    np.testing.assert_allclose(gauss_scalar(sample), 8.0, atol=1e-9)
    single = shape_sample(imm, np.array([0.7, 0.0, 1.1, 2.0]))
    assert isinstance(gauss_scalar(single), float)


@pytest.mark.parametrize("name", ["clifford-1-1-r0.6", "clifford-1-2", "clifford-2-2", "small-sphere"])
def test_gauss_scalar_matches_intrinsic(name):
    imm = builtin_immersion(name)
    x = imm.sample_grid(4)
    np.testing.assert_allclose(intrinsic_scalar(imm, x), gauss_scalar(shape_sample(imm, x)), atol=1e-6)


def test_equatorial_sphere_is_totally_geodesic():
    imm = equatorial_sphere(3)
    sample = shape_sample(imm, imm.sample_grid(3))
    assert np.max(np.abs(sample.principal)) < 1e-12
    np.testing.assert_allclose(gauss_scalar(sample), 6.0)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_small_sphere_curvature_is_cot_theta(theta):
    imm = small_sphere(theta)
    sample = shape_sample(imm, imm.sample_grid(4))
    np.testing.assert_allclose(np.abs(sample.principal), abs(1 / math.tan(theta)), atol=1e-10)
    # intrinsic curvature of a sphere of radius sin(theta): S = 2 / sin^2
    np.testing.assert_allclose(gauss_scalar(sample), 2 / math.sin(theta) ** 2, rtol=1e-10)


def test_normal_is_unit_tangent_to_sphere_and_orthogonal_to_image():
    imm = clifford_torus(1, 2, 0.5)
    x = imm.sample_grid(3)
    s = shape_sample(imm, x)
    nu, f, J = s.normal, imm.f(x), imm.jacobian(x)
    np.testing.assert_allclose(np.linalg.norm(nu, axis=-1), 1.0)
    np.testing.assert_allclose(np.einsum("nA,nA->n", nu, f), 0.0, atol=1e-13)
    np.testing.assert_allclose(np.einsum("nA,nAa->na", nu, J), 0.0, atol=1e-13)
    det = np.linalg.det(np.concatenate([f[:, :, None], J, nu[:, :, None]], axis=-1))
    assert np.all(det > 0)


def test_finite_difference_immersion_agrees_with_analytic():
    analytic = clifford_torus(1, 1, 0.6)
    callback = Immersion(n=2, f=analytic.f, lower=analytic.lower, upper=analytic.upper, periodic=(True, True), h=1e-4)
    x = analytic.sample_grid(4)
    a, b = shape_sample(analytic, x), shape_sample(callback, x)
    np.testing.assert_allclose(b.principal, a.principal, atol=1e-5)
    np.testing.assert_allclose(b.induced_g, a.induced_g, atol=1e-7)


def test_rank_deficient_immersion():
    # collapse the second coordinate: df has rank 1
    imm = Immersion.from_expressions(["cos(x1)", "sin(x1)", "0", "0 * x2"], [0, 0], [1, 1])
    with pytest.raises(RankDeficient):
        shape_sample(imm, imm.sample_grid(2))


@pytest.mark.parametrize(
    "args", [(0, 1, 0.5), (1, 1, 0.0), (1, 1, 1.0), (1.5, 1, 0.5), (1, -2, 0.5)]
)
def test_clifford_bad_parameters(args):
    with pytest.raises(BadParameters):
        clifford_torus(*args)


def test_small_sphere_bad_theta():
    with pytest.raises(BadParameters):
        small_sphere(0.0)


def test_immersion_validation():
    with pytest.raises(ValueError):
        Immersion.from_expressions(["x1", "0"], [0], [1])
    with pytest.raises(ValueError):
        Immersion.from_expressions(["cos(x1)", "sin(x1)", "0"], [1], [0])


@pytest.mark.parametrize("name", CLIFFORD_NAMES)
def test_clifford_builtins_are_isoparametric(name):
    rep = isoparametric_check(builtin_immersion(name), grid=5, with_intrinsic=True)
    assert rep.passed
    assert np.max(rep.metadata["H_std"]) < 1e-8
    assert rep.metadata["codazzi_max"] < 1e-6
    assert rep.metadata["scalar_min"] >= -1e-6
    assert rep.metadata["gauss_intrinsic_max"] < 1e-6
    assert rep.metadata["unit_defect"] < 1e-13


def test_minimal_flat_clifford_torus_scalar_vanishes():
    rep = isoparametric_check(builtin_immersion("clifford-1-1"), grid=6)
    assert abs(rep.metadata["scalar_min"]) < 1e-6 and abs(rep.metadata["scalar_max"]) < 1e-6


@pytest.mark.parametrize("eps", [0.02, 0.05, 0.1])
def test_perturbed_torus_is_not_isoparametric(eps):
    imm = perturbed_clifford(eps)
    rep = isoparametric_check(imm, grid=8, expect_pass=False)
    assert not rep.passed
    assert rep.ok  # the failure was expected
    assert rep.metadata["H_max_deviation"] > 1e-3
    # still a genuine hypersurface of the sphere: the shape operator is Codazzi
    assert rep.metadata["codazzi_max"] < 1e-6
    assert rep.metadata["unit_defect"] < 1e-13


def test_zero_perturbation_recovers_clifford():
    rep = isoparametric_check(perturbed_clifford(0.0), grid=5)
    assert rep.passed


def test_isoparametric_check_accepts_points_and_shapes():
    imm = clifford_torus(1, 1, 0.6)
    x = imm.sample_grid(3)
    assert isoparametric_check(imm, grid=x).metadata["n_points"] == 9
    assert isoparametric_check(imm, grid=(3, 4)).metadata["n_points"] == 12
    assert len(isoparametric_check(imm, grid=3).residuals) == 2


def test_shape_field_is_codazzi_on_induced_metric():
    imm = clifford_torus(2, 1, 0.7)
    assert np.max(codazzi_residual(shape_field(imm), imm.sample_grid(3))) < 1e-6


def test_builtin_registry():
    assert is_isoparametric_fixture("clifford-2-2")
    assert not is_isoparametric_fixture("perturbed-clifford")
    assert set(CLIFFORD_NAMES) < set(BUILTIN_IMMERSIONS)
    with pytest.raises(KeyError):
        builtin_immersion("klein-bottle")


def test_factories_accept_numpy_scalars():
    imm = clifford_torus(np.int64(1), 1, np.float64(1 / math.sqrt(2)))
    assert isoparametric_check(imm, grid=3).passed
    assert shape_sample(small_sphere(np.float64(1.0)), np.array([1.0, 0.5])).principal.shape == (2,)
    assert perturbed_clifford(np.float64(0.05), r=np.float64(0.7)).n == 2
