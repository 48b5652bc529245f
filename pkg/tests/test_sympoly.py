import itertools
import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from framediv.errors import DegenerateSpectrum, ZeroConventionViolated
from framediv.sympoly import (
    MonicPolynomial,
    Spectrum,
    coeff_b,
    coeff_c,
    companion_roots,
    elementary_symmetric,
    lambda_gradient_coefficients,
    newton_convert,
    pdoubleprime_at_roots,
    poly_eval_suite,
    power_sums,
    pprime_at_roots,
    quad_G,
    quad_L,
    random_same_sign_with_zero,
    random_spectra,
    sum_inverse_pprime,
    verify_partial_fraction_identity,
    weight_disagreement,
    weight_u,
    weight_v,
)


@st.composite
def spectra(draw, min_n=2, max_n=8, min_gap=0.05):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_spectra(np.random.default_rng(seed), n, 1, min_gap=min_gap)[0]


def brute_sigma(lam):
    n = len(lam)
    return np.array([sum(math.prod(c) for c in itertools.combinations(lam, k)) for k in range(1, n + 1)])


# -- symmetric functions ------------------------------------------------------


def test_sigma_small_example():
    np.testing.assert_allclose(elementary_symmetric([1.0, 2.0, 3.0]), [6.0, 11.0, 6.0])


@given(spectra())
def test_sigma_matches_combinatorial_definition(lam):
    np.testing.assert_allclose(elementary_symmetric(lam), brute_sigma(lam), rtol=1e-12, atol=1e-9)


@given(spectra())
def test_newton_round_trip(lam):
    sigma = elementary_symmetric(lam)
    p = newton_convert(sigma, kind="sigma")
    np.testing.assert_allclose(p, power_sums(lam), rtol=1e-9, atol=1e-7)
    np.testing.assert_allclose(newton_convert(p, kind="power"), sigma, rtol=1e-8, atol=1e-6)


def test_newton_rejects_too_many_values():
    with pytest.raises(ValueError):
        newton_convert(np.ones(4), n=3)


def test_spectrum_sorts_and_reports_gap():
    s = Spectrum([3.0, 1.0, 2.5])
    assert s.values.tolist() == [1.0, 2.5, 3.0]
    assert s.min_gap == pytest.approx(0.5)
    assert s.is_distinct()
    assert not Spectrum([1.0, 1.0]).is_distinct()


# -- polynomials ----------------------------------------------------------------


def test_poly_eval_suite_example():
    P = MonicPolynomial.from_roots([0.0, 1.0, 2.0])
    p, d1, d2 = poly_eval_suite(P, 0.0)
    assert (float(p), float(d1), float(d2)) == (0.0, 2.0, -6.0)


@given(spectra(max_n=6), st.floats(-3, 3))
def test_horner_agrees_with_numpy(lam, x):
    P = MonicPolynomial.from_roots(lam)
    c = P.full_coeffs
    p, d1, d2 = poly_eval_suite(P, x)
    np.testing.assert_allclose(p, np.polyval(c, x), rtol=1e-10, atol=1e-8)
    np.testing.assert_allclose(d1, np.polyval(np.polyder(c), x), rtol=1e-10, atol=1e-8)
    np.testing.assert_allclose(d2, np.polyval(np.polyder(c, 2), x), rtol=1e-10, atol=1e-8)


@given(spectra(max_n=6))
def test_product_form_derivatives_agree_with_horner(lam):
    P = MonicPolynomial.from_roots(lam)
    _, d1, d2 = poly_eval_suite(P, lam)
    scale = 1.0 + np.max(np.abs(lam)) ** len(lam)
    np.testing.assert_allclose(pprime_at_roots(lam), d1, atol=1e-9 * scale)
    np.testing.assert_allclose(pdoubleprime_at_roots(lam), d2, atol=1e-9 * scale)


@given(spectra(max_n=6))
def test_companion_roots_recover_spectrum(lam):
    roots = np.sort(companion_roots(MonicPolynomial.from_roots(lam).full_coeffs).real)
    np.testing.assert_allclose(roots, lam, atol=1e-6)


def test_shifted_changes_constant_term_only():
    P = MonicPolynomial.from_coefficients([1.0, 0.0, -3.0, 0.0])
    Q = P.shifted(2.0)
    np.testing.assert_array_equal(Q.full_coeffs, [1.0, 0.0, -3.0, 2.0])


def test_from_coefficients_requires_monic():
    with pytest.raises(ValueError):
        MonicPolynomial.from_coefficients([2.0, 1.0])


# -- identities -------------------------------------------------------------------


@given(spectra())
def test_partial_fraction_identity(lam):
    assert np.max(verify_partial_fraction_identity(lam)) < 1e-10 * (1 + np.max(np.abs(lam))) ** 2


@given(spectra())
def test_sum_of_inverse_derivatives_vanishes(lam):
    inv = 1.0 / pprime_at_roots(lam)
    assert abs(sum_inverse_pprime(lam)) <= 1e-9 * np.sum(np.abs(inv))


def test_partial_fraction_on_batch_matches_single(rng):
    lam = random_spectra(rng, 5, 20)
    batch = verify_partial_fraction_identity(lam)
    single = np.array([verify_partial_fraction_identity(l) for l in lam])
    np.testing.assert_allclose(batch, single)
    np.testing.assert_allclose(verify_partial_fraction_identity(lam, 2), batch[:, 2])


def test_degenerate_spectrum_raises():
    with pytest.raises(DegenerateSpectrum):
        verify_partial_fraction_identity([1.0, 1.0, 2.0])
    with pytest.raises(DegenerateSpectrum):
        coeff_c([0.0, 1e-12, 1.0])


# -- coefficient families --------------------------------------------------------


@given(spectra(min_n=2))
def test_v_closed_form_equals_column_sum(lam):
    assert np.max(weight_disagreement(lam, "V")) < 1e-9


@given(spectra(min_n=2))
def test_u_closed_form_equals_column_sum(lam):
    assert np.max(weight_disagreement(lam, "U")) < 1e-9


@given(spectra(min_n=3))
def test_L_is_negative(lam):
    assert np.all(quad_L(lam) < 0.0)


def test_L_exact_value():
    assert quad_L([1.0, 2.0, 3.0], 0) == pytest.approx(-0.5, abs=1e-12)


def test_L_brute_force(rng):
    lam = random_spectra(rng, 5, 1)[0]
    c = coeff_c(lam).table
    n = len(lam)
    for r in range(n):
        brute = sum(c[i, r] * c[j, r] for i in range(n) for j in range(n) if i != j and r not in (i, j))
        assert quad_L(lam, r) == pytest.approx(brute, rel=1e-10, abs=1e-12)


def test_L_needs_three_eigenvalues():
    with pytest.raises(ValueError):
        quad_L([1.0, 2.0])


@st.composite
def same_sign_with_zero(draw, min_n=4, max_n=8):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_same_sign_with_zero(np.random.default_rng(seed), n, 1)[0]


@given(same_sign_with_zero())
def test_G_is_negative(lam):
    assert np.all(quad_G(lam, zero_last=True) < 0.0)


@given(same_sign_with_zero(min_n=3))
def test_zero_last_forms_agree_with_general_forms(lam):
    b0 = np.nan_to_num(coeff_b(lam, zero_last=True).table)
    b1 = np.nan_to_num(coeff_b(lam).table)
    np.testing.assert_allclose(b0, b1, atol=1e-12 * (1 + np.max(np.abs(b1))))
    u0 = weight_u(lam, zero_last=True).table
    u1 = weight_u(lam).table
    np.testing.assert_allclose(u0, u1, rtol=1e-8, atol=1e-10)
    assert np.max(weight_disagreement(lam, "U", zero_last=True)) < 1e-9


def test_G_exact_value():
    assert quad_G([1.0, 2.0, 3.0, 0.0], zero_last=True)[3] == pytest.approx(-0.5, abs=1e-12)


def test_random_same_sign_has_trailing_zero(rng):
    lam = random_same_sign_with_zero(rng, 5, 50)
    assert np.all(lam[:, -1] == 0.0)
    head = lam[:, :-1]
    assert np.all((head > 0).all(axis=1) | (head < 0).all(axis=1))


def test_zero_last_convention_enforced():
    with pytest.raises(ZeroConventionViolated):
        coeff_b([1.0, 2.0, 3.0], zero_last=True)
    with pytest.raises(ZeroConventionViolated):
        weight_u([1.0, 0.0, 3.0, 0.5], zero_last=True)


def test_coefficient_tables_have_nan_diagonal(rng):
    lam = random_spectra(rng, 4, 1)[0]
    for fam in (coeff_c(lam), coeff_b(lam)):
        assert np.all(np.isnan(np.diagonal(fam.table)))
        off = fam.table[~np.eye(4, dtype=bool)]
        assert np.all(np.isfinite(off))


def test_v_vanishes_at_centre_of_symmetric_spectrum():
    v = weight_v([-1.0, 0.0, 1.0]).table
    assert abs(v[1]) < 1e-15


# -- eigenvalue gradients: compare with perturbed roots --------------------------


@given(spectra(max_n=6, min_gap=0.2), st.sampled_from(["sigma_n_varies", "sigma_nm1_varies"]))
def test_lambda_gradient_coefficients_match_root_perturbation(lam, mode):
    n = len(lam)
    sigma = elementary_symmetric(lam)
    k = n - 1 if mode == "sigma_n_varies" else n - 2
    eps = 1e-6
    roots = []
    for s in (-eps, eps):
        sig = sigma.copy()
        sig[k] += s
        roots.append(np.sort(companion_roots(MonicPolynomial(sig).full_coeffs).real))
    fd = (roots[1] - roots[0]) / (2 * eps)
    coef = lambda_gradient_coefficients(lam, mode)
    np.testing.assert_allclose(coef, fd, rtol=1e-4, atol=1e-4 * (1 + np.max(np.abs(coef))))
