"""Scalar algebra of a spectrum of distinct eigenvalues.

Elementary symmetric functions, power sums, the monic polynomial
``P(x) = prod_i (x - lambda_i)`` and the coefficient families built from
``P'`` and ``P''`` at its roots::

    c_ik = (-1)^(n+1) / ((lambda_i - lambda_k) P'(lambda_i))
    v_k  = (-1)^(n+1) P''(lambda_k) / (2 P'(lambda_k)^2)      = sum_{i != k} c_ik
    b_ik = (-1)^n lambda_i / ((lambda_i - lambda_k) P'(lambda_i))
    u_k  = sum_{i != k} b_ik
    L(r) = sum_{i != j; i, j != r} c_ir c_jr
    G(k) = sum_{i != j; i, j != k} b_ik b_jk

Every function accepts either a :class:`Spectrum` or an array of shape
``(..., n)``; in the array form the trailing axis holds one spectrum and all
leading axes are treated as a batch, which is how the property sweeps stay
vectorised.  Arrays are used in the order given, which matters for the
``zero_last`` convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from .errors import DegenerateSpectrum, ZeroConventionViolated

#: Relative tolerance below which two eigenvalues count as coincident.
DEGENERACY_RTOL = 1e-8

GradientMode = Literal["sigma_n_varies", "sigma_nm1_varies"]


@dataclass(frozen=True)
class Spectrum:
    """An ascending list of ``n >= 2`` real eigenvalues.

    Parameters
    ----------
    values : array_like
        Eigenvalues; they are sorted on construction.

    Attributes
    ----------
    min_gap : float
        Smallest pairwise distance between eigenvalues (may be zero).
    """

    values: np.ndarray
    min_gap: float = field(init=False)

    def __post_init__(self) -> None:
        vals = np.sort(np.asarray(self.values, dtype=float).ravel())
        if vals.size < 2:
            raise ValueError("a spectrum needs at least two eigenvalues")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "min_gap", float(np.min(np.diff(vals))))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self.values)

    def is_distinct(self) -> bool:
        """Whether the spectrum passes the degeneracy tolerance."""
        return self.min_gap >= DEGENERACY_RTOL * (1.0 + float(np.max(np.abs(self.values))))


SpectrumLike = Union[Spectrum, np.ndarray, "list[float]", "tuple[float, ...]"]


@dataclass(frozen=True)
class CoefficientFamily:
    """A table of coefficients indexed ``(i, k)`` or ``(k,)``.

    ``kind`` is one of ``"C", "V", "B", "U", "G", "L"``.  Matrix families
    store ``nan`` on the diagonal, where they are undefined.
    """

    kind: str
    table: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.table, dtype=dtype)


def _values(spec: SpectrumLike) -> np.ndarray:
    if isinstance(spec, Spectrum):
        return spec.values
    lam = np.asarray(spec, dtype=float)
    if lam.ndim == 0 or lam.shape[-1] < 1:
        raise ValueError("expected a spectrum with at least one value")
    return lam


def min_gaps(spec: SpectrumLike) -> np.ndarray:
    """Smallest pairwise distance within each spectrum of a batch."""
    lam = np.sort(_values(spec), axis=-1)
    return np.min(np.diff(lam, axis=-1), axis=-1)


def _require_distinct(lam: np.ndarray) -> None:
    if lam.shape[-1] < 2:
        return
    gaps = min_gaps(lam)
    scale = 1.0 + np.max(np.abs(lam), axis=-1)
    bad = gaps < DEGENERACY_RTOL * scale
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise DegenerateSpectrum(
            f"eigenvalues coincide within tolerance (min gap {np.atleast_1d(gaps)[tuple(idx)]:.3e})"
        )


def _differences(lam: np.ndarray) -> np.ndarray:
    """``D[..., i, k] = lambda_i - lambda_k`` with ones on the diagonal."""
    d = lam[..., :, None] - lam[..., None, :]
    n = lam.shape[-1]
    d[..., np.arange(n), np.arange(n)] = 1.0
    return d


def _inverse_differences(lam: np.ndarray) -> np.ndarray:
    """``1 / (lambda_i - lambda_k)`` off the diagonal, zero on it."""
    inv = 1.0 / _differences(lam)
    n = lam.shape[-1]
    inv[..., np.arange(n), np.arange(n)] = 0.0
    return inv


# ---------------------------------------------------------------------------
# symmetric functions
# ---------------------------------------------------------------------------


def elementary_symmetric(spec: SpectrumLike) -> np.ndarray:
    """Unsigned elementary symmetric functions ``sigma_1 .. sigma_n``.

    Computed by expanding ``prod (x - lambda_i)`` one factor at a time.

    Examples
    --------
    >>> elementary_symmetric([1.0, 2.0, 3.0])
    array([ 6., 11.,  6.])
    """
    lam = _values(spec)
    n = lam.shape[-1]
    e = np.zeros(lam.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for j in range(n):
        x = lam[..., j : j + 1]
        # e_k <- e_k + x * e_{k-1}; descending order keeps the old e_{k-1}
        e[..., 1 : j + 2] = e[..., 1 : j + 2] + x * e[..., 0 : j + 1]
    return e[..., 1:]


def power_sums(spec: SpectrumLike, m: int | None = None) -> np.ndarray:
    """Power sums ``p_1 .. p_m`` (``m`` defaults to ``n``)."""
    lam = _values(spec)
    m = lam.shape[-1] if m is None else m
    k = np.arange(1, m + 1)
    return np.sum(lam[..., None, :] ** k[:, None], axis=-1)


def sigma_to_power_sums(sigma: np.ndarray) -> np.ndarray:
    """Newton's identities, from ``sigma_1..sigma_m`` to ``p_1..p_m``.

    ``p_k = sum_{i=1}^{k-1} (-1)^(i-1) sigma_i p_{k-i} + (-1)^(k-1) k sigma_k``.
    """
    sigma = np.asarray(sigma, dtype=float)
    m = sigma.shape[-1]
    p = np.zeros_like(sigma)
    for k in range(1, m + 1):
        acc = (-1) ** (k - 1) * k * sigma[..., k - 1]
        for i in range(1, k):
            acc = acc + (-1) ** (i - 1) * sigma[..., i - 1] * p[..., k - i - 1]
        p[..., k - 1] = acc
    return p


def power_sums_to_sigma(p: np.ndarray) -> np.ndarray:
    """Newton's identities, from ``p_1..p_m`` to ``sigma_1..sigma_m``.

    ``k sigma_k = sum_{i=1}^{k} (-1)^(i-1) sigma_{k-i} p_i`` with ``sigma_0 = 1``.
    """
    p = np.asarray(p, dtype=float)
    m = p.shape[-1]
    sigma = np.zeros_like(p)
    for k in range(1, m + 1):
        acc = p[..., k - 1] * (-1) ** (k - 1)
        for i in range(1, k):
            acc = acc + (-1) ** (i - 1) * sigma[..., k - i - 1] * p[..., i - 1]
        sigma[..., k - 1] = acc / k
    return sigma


def newton_convert(
    values: np.ndarray, n: int | None = None, kind: Literal["sigma", "power"] = "sigma"
) -> np.ndarray:
    """Convert between elementary symmetric functions and power sums.

    Parameters
    ----------
    values : array_like, shape (..., m)
        ``sigma_1..sigma_m`` when ``kind="sigma"``, ``p_1..p_m`` when
        ``kind="power"``.
    n : int, optional
        Degree of the underlying polynomial; only used to check ``m <= n``.
    kind : {"sigma", "power"}
        What ``values`` holds.  The other representation is returned.
    """
    values = np.asarray(values, dtype=float)
    if n is not None and values.shape[-1] > n:
        raise ValueError(f"need m <= n, got m={values.shape[-1]} and n={n}")
    if kind == "sigma":
        return sigma_to_power_sums(values)
    if kind == "power":
        return power_sums_to_sigma(values)
    raise ValueError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# monic polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonicPolynomial:
    """``P(x) = x^n - sigma_1 x^(n-1) + sigma_2 x^(n-2) - ... + (-1)^n sigma_n``.

    The unsigned ``sigma`` is stored; :attr:`coeffs` applies the signs.
    """

    sigma: np.ndarray

    def __post_init__(self) -> None:
        s = np.array(self.sigma, dtype=float).ravel()
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def from_roots(cls, roots: SpectrumLike) -> "MonicPolynomial":
        return cls(elementary_symmetric(_values(roots)))

    @classmethod
    def from_coefficients(cls, coeffs) -> "MonicPolynomial":
        """Build from descending coefficients ``[1, a_1, ..., a_n]``."""
        c = np.asarray(coeffs, dtype=float).ravel()
        if c.size < 2 or c[0] != 1.0:
            raise ValueError("expected descending coefficients of a monic polynomial")
        k = np.arange(1, c.size)
        return cls(c[1:] * (-1.0) ** k)

    @property
    def n(self) -> int:
        return int(self.sigma.size)

    @property
    def coeffs(self) -> np.ndarray:
        """The ``n`` signed coefficients below the leading one."""
        k = np.arange(1, self.n + 1)
        return self.sigma * (-1.0) ** k

    @property
    def full_coeffs(self) -> np.ndarray:
        """All ``n + 1`` coefficients in descending order."""
        return np.concatenate([[1.0], self.coeffs])

    def shifted(self, t: float) -> "MonicPolynomial":
        """``P(x) + t``."""
        c = self.full_coeffs
        c[-1] += t
        return MonicPolynomial.from_coefficients(c)

    def derivative_coeffs(self) -> np.ndarray:
        """Descending coefficients of ``P'`` (leading coefficient ``n``)."""
        c = self.full_coeffs
        return c[:-1] * np.arange(self.n, 0, -1)

    def __call__(self, x):
        return poly_eval_suite(self, x)[0]

    def eval_suite(self, x):
        return poly_eval_suite(self, x)


def poly_eval_suite(P: MonicPolynomial, x):
    """Evaluate ``(P(x), P'(x), P''(x))`` by a single Horner sweep.

    Examples
    --------
    >>> P = MonicPolynomial.from_roots([0.0, 1.0, 2.0])
    >>> [float(v) for v in poly_eval_suite(P, 0.0)]
    [0.0, 2.0, -6.0]
    """
    x = np.asarray(x, dtype=float)
    p = np.ones_like(x)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    for c in P.coeffs:
        d2 = d2 * x + 2.0 * d1
        d1 = d1 * x + p
        p = p * x + c
    return p, d1, d2


def companion_roots(coeffs: np.ndarray) -> np.ndarray:
    """Complex roots of monic polynomials from their descending coefficients.

    ``coeffs`` has shape ``(..., n + 1)`` with leading entries equal to one;
    the roots of each polynomial are the eigenvalues of its companion matrix.
    """
    c = np.asarray(coeffs, dtype=float)
    n = c.shape[-1] - 1
    comp = np.zeros(c.shape[:-1] + (n, n))
    comp[..., 0, :] = -c[..., 1:] / c[..., :1]
    if n > 1:
        comp[..., np.arange(1, n), np.arange(n - 1)] = 1.0
    return np.linalg.eigvals(comp)


def pprime_at_roots(spec: SpectrumLike) -> np.ndarray:
    """``P'(lambda_i) = prod_{k != i} (lambda_i - lambda_k)``."""
    return np.prod(_differences(_values(spec)), axis=-1)


def pdoubleprime_at_roots(spec: SpectrumLike) -> np.ndarray:
    """``P''(lambda_i) = 2 P'(lambda_i) sum_{k != i} 1 / (lambda_i - lambda_k)``."""
    lam = _values(spec)
    return 2.0 * pprime_at_roots(lam) * np.sum(_inverse_differences(lam), axis=-1)


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def verify_partial_fraction_identity(spec: SpectrumLike, i: int | None = None):
    """Residual of the partial-fraction identity at ``lambda_i``.

    ``| sum_{k != i} 1 / (P'(lambda_k)(lambda_i - lambda_k)) + P''(lambda_i) / (2 P'(lambda_i)^2) |``

    ``P'`` and ``P''`` at the roots are taken in product form, which is
    accurate where Horner's rule on the expanded coefficients would cancel.

    Returns
    -------
    ndarray
        Residuals of shape ``(..., n)`` when ``i`` is None, else ``(...)``.
    """
    lam = _values(spec)
    _require_distinct(lam)
    pp = pprime_at_roots(lam)
    ppp = pdoubleprime_at_roots(lam)
    lhs = np.sum(_inverse_differences(lam) / pp[..., None, :], axis=-1)
    rhs = -0.5 * ppp / pp**2
    res = np.abs(lhs - rhs)
    return res if i is None else res[..., i]


def sum_inverse_pprime(spec: SpectrumLike) -> np.ndarray:
    """``sum_i 1 / P'(lambda_i)``, which vanishes for ``n >= 2``."""
    lam = _values(spec)
    _require_distinct(lam)
    return np.sum(1.0 / pprime_at_roots(lam), axis=-1)


def _sign(n: int) -> float:
    return -1.0 if n % 2 else 1.0


def coeff_c(spec: SpectrumLike) -> CoefficientFamily:
    """``c_ik = (-1)^(n+1) / ((lambda_i - lambda_k) P'(lambda_i))``; nan on the diagonal."""
    lam = _values(spec)
    _require_distinct(lam)
    n = lam.shape[-1]
    table = _sign(n + 1) * _inverse_differences(lam) / pprime_at_roots(lam)[..., :, None]
    table[..., np.arange(n), np.arange(n)] = np.nan
    return CoefficientFamily("C", table)


def weight_v(spec: SpectrumLike, form: Literal["closed", "sum"] = "closed") -> CoefficientFamily:
    """Weights ``v_k`` of the X-gradient pairing.

    ``form="closed"`` evaluates ``(-1)^(n+1) P''(lambda_k) / (2 P'(lambda_k)^2)``;
    ``form="sum"`` evaluates ``sum_{i != k} c_ik``.
    """
    lam = _values(spec)
    _require_distinct(lam)
    n = lam.shape[-1]
    if form == "closed":
        pp = pprime_at_roots(lam)
        table = _sign(n + 1) * pdoubleprime_at_roots(lam) / (2.0 * pp**2)
    elif form == "sum":
        table = np.nansum(coeff_c(lam).table, axis=-2)
    else:
        raise ValueError(f"unknown form {form!r}")
    return CoefficientFamily("V", table)


def _quadratic(columns: np.ndarray) -> np.ndarray:
    """``(sum_i x_ik)^2 - sum_i x_ik^2`` per column, ignoring nan."""
    x = np.nan_to_num(columns, nan=0.0)
    return np.sum(x, axis=-2) ** 2 - np.sum(x * x, axis=-2)


def quad_L(spec: SpectrumLike, r: int | None = None):
    """``L(r) = sum_{i != j; i, j != r} c_ir c_jr``, computed as a square minus a sum of squares.

    Returns the whole vector ``L(1..n)`` when ``r`` is None.  Every entry is
    negative for a distinct spectrum with ``n >= 3``.
    """
    lam = _values(spec)
    if lam.shape[-1] < 3:
        raise ValueError("L(r) needs n >= 3")
    L = _quadratic(coeff_c(lam).table)
    return L if r is None else L[..., r]


def _split_zero_last(lam: np.ndarray) -> np.ndarray:
    if np.any(lam[..., -1] != 0.0):
        raise ZeroConventionViolated("zero_last requires the last eigenvalue to be exactly 0")
    head = lam[..., :-1]
    if np.any(head == 0.0):
        raise ZeroConventionViolated("zero_last requires the other eigenvalues to be nonzero")
    return head


def coeff_b(spec: SpectrumLike, zero_last: bool = False) -> CoefficientFamily:
    """``b_ik = (-1)^n lambda_i / ((lambda_i - lambda_k) P'(lambda_i))``; nan on the diagonal.

    With ``zero_last`` the last eigenvalue must be exactly zero; the rows are
    then evaluated through ``P_1(x) = P(x) / x``, which makes the last row
    vanish identically.
    """
    lam = _values(spec)
    _require_distinct(lam)
    n = lam.shape[-1]
    if zero_last:
        head = _split_zero_last(lam)
        p1 = pprime_at_roots(head) if head.shape[-1] > 1 else np.ones(head.shape)
        table = np.zeros(lam.shape + (n,))
        table[..., :-1, :] = _sign(n) * _inverse_differences(lam)[..., :-1, :] / p1[..., :, None]
    else:
        table = _sign(n) * lam[..., :, None] * _inverse_differences(lam)
        table = table / pprime_at_roots(lam)[..., :, None]
    table[..., np.arange(n), np.arange(n)] = np.nan
    return CoefficientFamily("B", table)


def weight_u(
    spec: SpectrumLike, zero_last: bool = False, form: Literal["closed", "sum"] = "closed"
) -> CoefficientFamily:
    """Weights ``u_k = sum_{i != k} b_ik``.

    The closed forms are ``u_k = (-1)^n P_1''(lambda_k) / (2 P_1'(lambda_k)^2)``
    for ``k < n`` and ``u_n = (-1)^(n+1) / P'(0)`` under ``zero_last``, and in
    general ``u_k = (-1)^n (lambda_k P''(lambda_k) / (2 P'(lambda_k)^2) - 1 / P'(lambda_k))``.
    """
    lam = _values(spec)
    _require_distinct(lam)
    n = lam.shape[-1]
    if form == "sum":
        table = np.nansum(coeff_b(lam, zero_last=zero_last).table, axis=-2)
    elif form != "closed":
        raise ValueError(f"unknown form {form!r}")
    elif zero_last:
        head = _split_zero_last(lam)
        table = np.empty(lam.shape)
        if head.shape[-1] > 1:
            p1 = pprime_at_roots(head)
            table[..., :-1] = _sign(n) * pdoubleprime_at_roots(head) / (2.0 * p1**2)
        else:
            table[..., :-1] = 0.0
        table[..., -1] = _sign(n + 1) / np.prod(-head, axis=-1)
    else:
        pp = pprime_at_roots(lam)
        table = _sign(n) * (lam * pdoubleprime_at_roots(lam) / (2.0 * pp**2) - 1.0 / pp)
    return CoefficientFamily("U", table)


def quad_G(spec: SpectrumLike, zero_last: bool = False) -> np.ndarray:
    """``G(k) = sum_{i != j; i, j != k} b_ik b_jk`` for every ``k``."""
    return _quadratic(coeff_b(spec, zero_last=zero_last).table)


def weight_disagreement(
    spec: SpectrumLike, family: Literal["V", "U"] = "V", zero_last: bool = False
) -> np.ndarray:
    """Disagreement between the closed and summed forms of ``v_k`` or ``u_k``.

    The difference is divided by ``max(|closed form|, sum_i |term_i|)``, the
    natural size of a sum whose value may itself vanish (``v_k = 0`` at the
    middle root of a symmetric spectrum, for instance).
    """
    if family == "V":
        closed = weight_v(spec).table
        summed = weight_v(spec, form="sum").table
        terms = coeff_c(spec).table
    elif family == "U":
        closed = weight_u(spec, zero_last=zero_last).table
        summed = weight_u(spec, zero_last=zero_last, form="sum").table
        terms = coeff_b(spec, zero_last=zero_last).table
    else:
        raise ValueError(f"unknown family {family!r}")
    scale = np.maximum(np.abs(closed), np.nansum(np.abs(terms), axis=-2))
    scale = np.where(scale > 0.0, scale, 1.0)
    return np.abs(closed - summed) / scale


def lambda_gradient_coefficients(spec: SpectrumLike, mode: GradientMode) -> np.ndarray:
    """Multipliers ``m_i`` with ``d lambda_i = m_i d sigma`` for the varying ``sigma``.

    ``mode="sigma_n_varies"`` gives ``(-1)^(n+1) / P'(lambda_i)``;
    ``mode="sigma_nm1_varies"`` gives ``(-1)^n lambda_i / P'(lambda_i)``.
    """
    lam = _values(spec)
    _require_distinct(lam)
    n = lam.shape[-1]
    pp = pprime_at_roots(lam)
    if mode == "sigma_n_varies":
        return _sign(n + 1) / pp
    if mode == "sigma_nm1_varies":
        return _sign(n) * lam / pp
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# random spectra
# ---------------------------------------------------------------------------


def random_spectra(
    rng: np.random.Generator,
    n: int,
    count: int,
    low: float = -5.0,
    high: float = 5.0,
    min_gap: float = 0.05,
) -> np.ndarray:
    """Ascending spectra drawn uniformly on ``[low, high]`` with gaps above ``min_gap``.

    Rejection sampling; returns an array of shape ``(count, n)``.
    """
    out = np.empty((0, n))
    while out.shape[0] < count:
        need = count - out.shape[0]
        draw = np.sort(rng.uniform(low, high, size=(2 * need + 8, n)), axis=-1)
        keep = np.min(np.diff(draw, axis=-1), axis=-1) > min_gap
        out = np.concatenate([out, draw[keep]])
    return out[:count]


def random_same_sign_with_zero(
    rng: np.random.Generator,
    n: int,
    count: int,
    high: float = 5.0,
    min_gap: float = 0.05,
) -> np.ndarray:
    """Spectra of ``n - 1`` same-sign eigenvalues (ascending) followed by a zero.

    The sign is drawn per spectrum; all gaps, including the gap to zero,
    exceed ``min_gap``.  Shape ``(count, n)``.
    """
    out = np.empty((0, n))
    while out.shape[0] < count:
        need = count - out.shape[0]
        draw = np.sort(rng.uniform(0.0, high, size=(2 * need + 8, n - 1)), axis=-1)
        with_zero = np.concatenate([np.zeros((draw.shape[0], 1)), draw], axis=-1)
        keep = np.min(np.diff(with_zero, axis=-1), axis=-1) > min_gap
        draw = draw[keep]
        signs = rng.choice([-1.0, 1.0], size=(draw.shape[0], 1))
        draw = np.sort(signs * draw, axis=-1)
        out = np.concatenate([out, np.concatenate([draw, np.zeros((draw.shape[0], 1))], axis=-1)])
    return out[:count]
