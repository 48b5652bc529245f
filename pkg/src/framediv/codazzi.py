"""Symmetric (0,2)-tensor fields, their covariant derivatives and eigenframes.

For a symmetric tensor ``a`` on a :class:`~framediv.geometry.ChartedMetric`
and an orthonormal frame ``e_1..e_n`` the covariant derivative components are::

    a_ijk = (nabla_{e_k} a)(e_i, e_j)
          = e_k(A_ij) - sum_l Gamma_ki^l A_lj - sum_l Gamma_kj^l A_il,

with ``A_ij = a(e_i, e_j)``.  The tensor is *Codazzi* when ``a_ijk`` is
totally symmetric.  In an eigenframe (``A = diag(lambda)``, eigenvalues
distinct) one has::

    a_ijk = (lambda_j - lambda_i) Gamma_kj^i        (i != j)
    a_iik = lambda_ik = e_k(lambda_i)

and for Codazzi tensors additionally::

    Gamma_ii^k = lambda_ik / (lambda_i - lambda_k)   (i != k)
    sum_{i<j, k != i,j} Gamma_ij^k Gamma_ji^k = 0.

When all elementary symmetric functions of the eigenvalues except one are
constant, the connection coefficients and the field ``X = sum_i nabla_{e_i} e_i``
are fixed by the gradient of the varying one, with coefficients from
:mod:`framediv.sympoly`; :func:`verify_eigenframe_gradient_formulas` checks
those relations.

The module also provides fixtures: Codazzi diagonal fields on a warped strip
whose eigenvalues are the roots of ``Q(x) + t`` (so all but one elementary
symmetric function is constant), and two documented non-Codazzi fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import chebyshev as cheb

from .errors import DegenerateSpectrum, HypothesisViolated, NotCodazzi, StepTooLarge
from .expr import compile_components
from .geometry import (
    ChartedMetric,
    FramePointData,
    FrameRule,
    _as_batch,
    _component_matrix,
    _map_chunks,
    _psi_mask,
    _squeeze,
    _Stencil,
    gram_schmidt,
    gram_schmidt_rule,
    psi_from_gamma,
)
from .polyfamily import ShiftFamily, roots_at
from .report import ReportSet, VerificationReport
from .sympoly import (
    DEGENERACY_RTOL,
    MonicPolynomial,
    Spectrum,
    coeff_b,
    coeff_c,
    elementary_symmetric,
    lambda_gradient_coefficients,
    min_gaps,
    quad_G,
    quad_L,
    weight_u,
    weight_v,
)

#: Largest tolerated ``|a_ijk - a_jik|`` before the step is blamed.
SYMMETRY_LIMIT = 1e-6
#: Default Codazzi precondition tolerance.
CODAZZI_TOL = 1e-6
#: Relative standard deviation below which a sampled function counts as constant.
CONSTANCY_RTOL = 1e-8
#: Default tolerance for the eigenframe identities.
IDENTITY_TOL = 1e-6
#: Default tolerance for the vanishing triple sum.
TRIPLE_SUM_TOL = 1e-7

GRADIENT_MODES = ("sigma_n_varies", "sigma_nm1_varies")

TensorCallback = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetricTensorField:
    """A symmetric (0,2)-tensor given by its coordinate components.

    Parameters
    ----------
    a : callable
        Maps points ``(N, n)`` to symmetric matrices ``(N, n, n)``.
    metric : ChartedMetric
        The metric (and chart) the field lives on.
    name : str
        Used in reports.
    expressions : tuple, optional
        Source expressions when built by :meth:`from_expressions`.
    """

    a: TensorCallback
    metric: ChartedMetric
    name: str = "field"
    expressions: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.metric.dim

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.a(x)

    @classmethod
    def from_expressions(
        cls,
        components,
        metric: ChartedMetric,
        coordinates: Optional[Sequence[str]] = None,
        name: str = "field",
    ) -> "SymmetricTensorField":
        """Build a field from expression strings (diagonal list or full matrix)."""
        matrix = _component_matrix(components)
        n = len(matrix)
        if n != metric.dim:
            raise ValueError(f"field has {n} rows but the metric has dimension {metric.dim}")
        names = list(coordinates) if coordinates else [f"x{i + 1}" for i in range(n)]
        evaluate = compile_components([matrix[i][j] for i in range(n) for j in range(n)], names)

        def a(x: np.ndarray) -> np.ndarray:
            return evaluate(x).reshape(x.shape[:-1] + (n, n))

        return cls(
            a=a,
            metric=metric,
            name=name,
            expressions=tuple(tuple(str(e) for e in row) for row in matrix),
        )

    @classmethod
    def from_metric(cls, metric: ChartedMetric, scale: float = 1.0) -> "SymmetricTensorField":
        """The field ``scale * g``."""
        return cls(a=lambda x: scale * metric.g(x), metric=metric, name=f"{scale:g}*g[{metric.name}]")

    def asymmetry(self, points) -> np.ndarray:
        """``max |a_ab - a_ba|`` at each point."""
        x, single = _as_batch(self.metric, points)
        A = self.a(x)
        return _squeeze(np.max(np.abs(A - np.swapaxes(A, -1, -2)), axis=(-2, -1)), single)


@dataclass(frozen=True)
class CovariantDerivativeSample:
    """``a_ijk = (nabla_{e_k} a)(e_i, e_j)`` in a frame at sample points."""

    point: np.ndarray
    a_ijk: np.ndarray
    frame: np.ndarray
    gamma: np.ndarray
    components: np.ndarray

    @property
    def symmetry_residual(self) -> np.ndarray:
        """``max |a_ijk - a_jik|`` per point."""
        return np.max(np.abs(self.a_ijk - np.swapaxes(self.a_ijk, -3, -2)), axis=(-3, -2, -1))

    @property
    def codazzi_residual(self) -> np.ndarray:
        """``max |a_ijk - a_pi(ijk)|`` over all index permutations, per point."""
        return _total_symmetry_residual(self.a_ijk)


@dataclass(frozen=True)
class EigenframeSample:
    """Eigen-decomposition of ``g^{-1} a`` with frame derivatives.

    Attributes
    ----------
    lambdas : ndarray, shape (..., n)
        Ascending eigenvalues.
    eigenframe : ndarray, shape (..., n, n)
        Column ``i`` holds the coordinate components of ``e_i``.
    lambda_grad : ndarray, shape (..., n, n)
        ``lambda_grad[i, k] = e_k(lambda_i)``.
    gamma : ndarray, shape (..., n, n, n)
        Connection coefficients of the eigenframe, ``gamma[i, j, k] = Gamma_ij^k``.
    components : ndarray, shape (..., n, n)
        ``a(e_i, e_j)``; diagonal up to rounding.
    """

    point: np.ndarray
    lambdas: np.ndarray
    eigenframe: np.ndarray
    lambda_grad: np.ndarray
    gamma: np.ndarray
    components: np.ndarray

    @property
    def spectrum(self) -> Spectrum:
        """The eigenvalues as a :class:`Spectrum` (single-point samples only)."""
        if self.lambdas.ndim != 1:
            raise ValueError("spectrum is only defined for a single sample point")
        return Spectrum(self.lambdas)

    @property
    def diagonal_residual(self) -> np.ndarray:
        """``max |a(e_i, e_j) - lambda_i delta_ij|``."""
        n = self.lambdas.shape[-1]
        D = self.lambdas[..., :, None] * np.eye(n)
        return np.max(np.abs(self.components - D), axis=(-2, -1))


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------


def _fix_signs(E: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of every column positive."""
    mag = np.abs(E)
    tol = 1e-12 * np.max(mag, axis=-2, keepdims=True)
    first = np.argmax(mag > tol, axis=-2)  # [..., j]
    lead = np.take_along_axis(E, first[..., None, :], axis=-2)
    return E * np.where(lead < 0.0, -1.0, 1.0)


def _eigh_in_frame(a: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues/eigenframe of ``g^{-1} a`` through the Gram--Schmidt gauge."""
    E0 = gram_schmidt(g)
    B = np.swapaxes(E0, -1, -2) @ a @ E0
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    w, V = np.linalg.eigh(B)
    return w, _fix_signs(E0 @ V)


def eigenframe_rule(tensor: SymmetricTensorField) -> FrameRule:
    """Frame rule whose frame diagonalises ``tensor`` (ascending eigenvalues).

    The symmetric eigenproblem is solved in the orthonormal gauge ``E0^T a E0``
    of the Gram--Schmidt frame and transformed back.  Columns are sign-fixed
    by a positive leading component; stencil evaluations are further aligned
    with the frame at the centre point.
    """

    def rule(points: np.ndarray, g: np.ndarray) -> np.ndarray:
        return _eigh_in_frame(tensor.a(points), g)[1]

    rule.needs_alignment = True  # type: ignore[attr-defined]
    return rule


class _TensorStencil:
    """Frame-contracted tensor components on a central-difference stencil."""

    def __init__(self, tensor: SymmetricTensorField, x: np.ndarray, rule: FrameRule) -> None:
        self.tensor = tensor
        self.st = _Stencil(tensor.metric, x, rule, tensor.metric.h)
        self.n = tensor.dim
        self._comp: dict = {}

    def comp(self, off: tuple) -> np.ndarray:
        """``A_ij = a(e_i, e_j)`` at a stencil offset."""
        try:
            return self._comp[off]
        except KeyError:
            E = self.st.frame(off)
            A = np.swapaxes(E, -1, -2) @ self.tensor.a(self.st.points(off)) @ E
            self._comp[off] = A
            return A

    def directional(self, fn) -> np.ndarray:
        """Frame derivatives ``e_k(F)`` of a stencil function, new last axis ``k``."""
        z = self.st.zero
        E = self.st.frame(z)
        d = np.stack([self.st.derivative(fn, z, a) for a in range(self.n)], axis=1)  # [N, a, ...]
        return _contract(d, E)

    def covariant(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        z = self.st.zero
        A = self.comp(z)
        gamma = self.st.gamma(z)
        eA = self.directional(self.comp)  # [N, i, j, k] = e_k(A_ij)
        t1 = np.einsum("nkil,nlj->nijk", gamma, A)
        t2 = np.einsum("nkjl,nil->nijk", gamma, A)
        return eA - t1 - t2, self.st.frame(z), gamma, A


def _contract(d: np.ndarray, E: np.ndarray) -> np.ndarray:
    """``out[N, ..., k] = sum_a E[N, a, k] d[N, a, ...]``."""
    N, n = d.shape[0], d.shape[1]
    flat = d.reshape(N, n, -1)  # [N, a, m]
    out = np.swapaxes(flat, 1, 2) @ E  # [N, m, k]
    return out.reshape(d.shape[:1] + d.shape[2:] + (E.shape[-1],))


def _total_symmetry_residual(a_ijk: np.ndarray) -> np.ndarray:
    base = a_ijk
    perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    lead = tuple(range(base.ndim - 3))
    worst = np.zeros(base.shape[:-3])
    for p in perms:
        other = np.transpose(base, lead + tuple(len(lead) + q for q in p))
        worst = np.maximum(worst, np.max(np.abs(base - other), axis=(-3, -2, -1)))
    return worst


def _frame_input(tensor: SymmetricTensorField, frame) -> tuple[np.ndarray, bool, FrameRule]:
    if isinstance(frame, FramePointData):
        x, single = _as_batch(tensor.metric, frame.point)
        return x, single, frame.rule or gram_schmidt_rule
    x, single = _as_batch(tensor.metric, frame)
    return x, single, gram_schmidt_rule


# ---------------------------------------------------------------------------
# covariant derivative and Codazzi test
# ---------------------------------------------------------------------------


def covariant_derivative(
    tensor: SymmetricTensorField, frame: Union[FramePointData, np.ndarray, Sequence[float]]
) -> CovariantDerivativeSample:
    """Frame components ``a_ijk`` of the covariant derivative.

    Parameters
    ----------
    tensor : SymmetricTensorField
    frame : FramePointData or array_like
        Either frame data (its points and frame rule are used) or bare points,
        in which case the Gram--Schmidt frame is used.

    Returns
    -------
    CovariantDerivativeSample

    Raises
    ------
    StepTooLarge
        If ``max |a_ijk - a_jik|`` exceeds :data:`SYMMETRY_LIMIT`.
    """
    x, single, rule = _frame_input(tensor, frame)

    def chunk(p):
        return _TensorStencil(tensor, p, rule).covariant()

    parts = _map_chunks(chunk, x)
    a_ijk, E, gamma, A = (np.concatenate([q[i] for q in parts]) for i in range(4))
    sample = CovariantDerivativeSample(point=x, a_ijk=a_ijk, frame=E, gamma=gamma, components=A)
    sym = sample.symmetry_residual
    if np.any(sym > SYMMETRY_LIMIT):
        raise StepTooLarge(f"(i, j)-symmetry residual {np.max(sym):.2e} of a_ijk exceeds {SYMMETRY_LIMIT}")
    if single:
        return CovariantDerivativeSample(
            point=x[0], a_ijk=a_ijk[0], frame=E[0], gamma=gamma[0], components=A[0]
        )
    return sample


def covariant_derivative_coordinates(tensor: SymmetricTensorField, points) -> np.ndarray:
    """Coordinate components ``(nabla_c a)_ab = d_c a_ab - Gamma^d_ca a_db - Gamma^d_cb a_ad``.

    Returned as ``out[..., a, b, c]``; an independent route to ``a_ijk`` after
    contraction with any frame.
    """
    x, single = _as_batch(tensor.metric, points)
    n = tensor.dim

    def chunk(p):
        st = _Stencil(tensor.metric, p, gram_schmidt_rule, tensor.metric.h)
        z = st.zero
        comp = lambda off: tensor.a(st.points(off))  # noqa: E731
        da = np.stack([st.derivative(comp, z, c) for c in range(n)], axis=-1)  # [N, a, b, c]
        chr_ = st.christoffel(z)  # [N, c, a, d] = Gamma^d_ca
        a0 = comp(z)
        t1 = np.einsum("ncad,ndb->nabc", chr_, a0)
        t2 = np.einsum("ncbd,nad->nabc", chr_, a0)
        return da - t1 - t2

    out = np.concatenate(_map_chunks(chunk, x))
    return _squeeze(out, single)


def codazzi_residual(tensor: SymmetricTensorField, frame) -> Union[float, np.ndarray]:
    """``max |a_ijk - a_pi(ijk)|`` over index permutations, per sample point.

    ``frame`` is frame data or bare points (Gram--Schmidt frame).
    """
    x, single, rule = _frame_input(tensor, frame)
    sample = covariant_derivative(tensor, FramePointData(point=x, frame=np.empty(0), rule=rule))
    res = sample.codazzi_residual
    return float(res[0]) if single else res


def _require_codazzi(tensor: SymmetricTensorField, x: np.ndarray, tolerance: float) -> float:
    res = codazzi_residual(tensor, x)
    worst = float(np.max(res))
    if not worst <= tolerance:
        raise NotCodazzi(
            f"field {tensor.name!r} is not Codazzi: max |a_ijk - a_pi(ijk)| = {worst:.3e} > {tolerance:g}",
            residual=worst,
        )
    return worst


# ---------------------------------------------------------------------------
# eigenframes
# ---------------------------------------------------------------------------


def _require_distinct(lam: np.ndarray) -> None:
    gaps = min_gaps(lam)
    scale = 1.0 + np.max(np.abs(lam), axis=-1)
    bad = ~(gaps > DEGENERACY_RTOL * scale)
    if np.any(bad):
        raise DegenerateSpectrum(f"eigenvalues of g^-1 a coincide (min gap {np.min(gaps):.3e})")


def eigenframe(tensor: SymmetricTensorField, point) -> EigenframeSample:
    """Eigenframe of ``g^{-1} a`` with eigenvalue gradients and connection.

    ``lambda_grad[i, k] = e_k(lambda_i)`` comes from central differences of
    the sorted eigenvalue fields.

    Raises
    ------
    DegenerateSpectrum
        If two eigenvalues coincide at some sample point.
    """
    x, single = _as_batch(tensor.metric, point)
    lam0, _ = _eigh_in_frame(tensor.a(x), tensor.metric.g(x))
    _require_distinct(lam0)
    rule = eigenframe_rule(tensor)

    def chunk(p):
        ts = _TensorStencil(tensor, p, rule)
        z = ts.st.zero
        A = ts.comp(z)
        diag = lambda off: np.diagonal(ts.comp(off), axis1=-2, axis2=-1)  # noqa: E731
        grad = ts.directional(diag)  # [N, i, k]
        return np.diagonal(A, axis1=-2, axis2=-1).copy(), ts.st.frame(z), grad, ts.st.gamma(z), A

    parts = _map_chunks(chunk, x)
    lam, E, grad, gamma, A = (np.concatenate([q[i] for q in parts]) for i in range(5))
    return EigenframeSample(
        point=_squeeze(x, single),
        lambdas=_squeeze(lam, single),
        eigenframe=_squeeze(E, single),
        lambda_grad=_squeeze(grad, single),
        gamma=_squeeze(gamma, single),
        components=_squeeze(A, single),
    )


# ---------------------------------------------------------------------------
# eigenframe identities
# ---------------------------------------------------------------------------


def _offdiag_mask(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def triple_sum(gamma: np.ndarray) -> np.ndarray:
    """``sum_{i<j, k != i,j} Gamma_ij^k Gamma_ji^k``."""
    gamma = np.asarray(gamma)
    mask = _psi_mask(gamma.shape[-1])
    return np.sum(gamma * np.swapaxes(gamma, -3, -2) * mask, axis=(-3, -2, -1))


def verify_eigen_derivative_identities(
    tensor: SymmetricTensorField, points, tolerance: float = IDENTITY_TOL
) -> ReportSet:
    """Check ``a_ijk = (lambda_j - lambda_i) Gamma_kj^i`` (``i != j``) and ``a_iik = lambda_ik``.

    ``a_ijk`` is the covariant derivative in the eigenframe; ``Gamma`` and
    ``lambda_ik`` come from the eigenframe sample.  Holds for every symmetric
    field with distinct eigenvalues.

    Returns
    -------
    ReportSet
        Identities ``"offdiagonal-derivative"`` and ``"diagonal-derivative"``.

    Raises
    ------
    DegenerateSpectrum
    """
    x, _ = _as_batch(tensor.metric, points)
    eig = eigenframe(tensor, x)
    n = tensor.dim
    cov = covariant_derivative(tensor, FramePointData(point=x, frame=eig.eigenframe, rule=eigenframe_rule(tensor)))
    lam = eig.lambdas
    # rhs[i, j, k] = (lambda_j - lambda_i) Gamma_kj^i
    diff = lam[:, None, :, None] - lam[:, :, None, None]
    gamma_kji = np.transpose(eig.gamma, (0, 3, 2, 1))  # [i, j, k] -> Gamma_kj^i
    off = np.abs(cov.a_ijk - diff * gamma_kji)
    off_res = np.max(np.where(_offdiag_mask(n)[None, :, :, None], off, 0.0), axis=(1, 2, 3))
    a_iik = np.einsum("niik->nik", cov.a_ijk)
    diag_res = np.max(np.abs(a_iik - eig.lambda_grad), axis=(1, 2))
    meta = {"field": tensor.name, "metric": tensor.metric.name, "frame": "eigenframe"}
    return ReportSet(
        (
            VerificationReport("offdiagonal-derivative", x, off_res, tolerance, dict(meta)),
            VerificationReport("diagonal-derivative", x, diag_res, tolerance, dict(meta)),
        )
    )


def verify_codazzi_eigen_identities(
    tensor: SymmetricTensorField,
    points,
    tolerance: float = IDENTITY_TOL,
    sum_tolerance: float = TRIPLE_SUM_TOL,
    codazzi_tolerance: float = CODAZZI_TOL,
) -> ReportSet:
    """Check ``Gamma_ii^k = lambda_ik / (lambda_i - lambda_k)`` and the vanishing triple sum.

    Returns
    -------
    ReportSet
        ``"diagonal-connection"`` (max over ``i != k``) and ``"triple-sum"``
        (absolute value of ``sum_{i<j, k != i,j} Gamma_ij^k Gamma_ji^k``).
        Metadata records the Codazzi residual found by the precondition.

    Raises
    ------
    NotCodazzi
        If the Codazzi residual exceeds ``codazzi_tolerance``.
    DegenerateSpectrum
    """
    x, _ = _as_batch(tensor.metric, points)
    codazzi_max = _require_codazzi(tensor, x, codazzi_tolerance)
    eig = eigenframe(tensor, x)
    n = tensor.dim
    lam = eig.lambdas
    gii = np.einsum("niik->nik", eig.gamma)
    denom = lam[:, :, None] - lam[:, None, :]
    np.einsum("nii->ni", denom)[...] = 1.0
    pred = eig.lambda_grad / denom
    conn = np.max(np.where(_offdiag_mask(n), np.abs(gii - pred), 0.0), axis=(1, 2))
    tsum = np.abs(triple_sum(eig.gamma))
    meta = {"field": tensor.name, "metric": tensor.metric.name, "codazzi_max": codazzi_max}
    return ReportSet(
        (
            VerificationReport("diagonal-connection", x, conn, tolerance, dict(meta)),
            VerificationReport("triple-sum", x, tsum, sum_tolerance, dict(meta)),
        )
    )


def _constancy(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.mean(sigma, axis=0)
    std = np.std(sigma, axis=0)
    return std, CONSTANCY_RTOL * (1.0 + np.abs(mean))


def verify_eigenframe_gradient_formulas(
    tensor: SymmetricTensorField,
    points,
    mode: str,
    tolerance: float = 1e-5,
    codazzi_tolerance: float = CODAZZI_TOL,
) -> ReportSet:
    """Eigenframe connection and ``X`` in terms of the one varying symmetric function.

    With ``h`` the varying function (``sigma_n`` or ``sigma_{n-1}``) and
    ``h_k = e_k(h)``, checks

    * ``"lambda-gradient"``: ``lambda_ik = m_i h_k``,
    * ``"gamma-gradient"``: ``Gamma_ii^k = c_ik h_k`` (resp. ``b_ik h_k``),
    * ``"x-gradient"``: ``<X, grad h> = sum_k v_k h_k^2`` (resp. ``u_k``),
    * ``"psi-quadratic"``: ``Psi = 1/2 sum_k L(k) h_k^2`` (resp. ``G(k)``),

    where ``X = sum_i nabla_{e_i} e_i`` and all coefficients come from
    :mod:`framediv.sympoly` evaluated on the measured eigenvalues.  ``h_k``
    is obtained by central differences of ``h`` computed from the sampled
    eigenvalues.

    The hypothesis that every other symmetric function is constant is tested
    on the sample set (standard deviation below ``1e-8 (1 + |mean|)``); its
    deviations are recorded in the metadata next to the identity residuals.

    Raises
    ------
    HypothesisViolated
        If a symmetric function that should be constant varies over the samples.
    NotCodazzi
    DegenerateSpectrum
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"mode must be one of {GRADIENT_MODES}")
    x, _ = _as_batch(tensor.metric, points)
    n = tensor.dim
    varying = n - 1 if mode == "sigma_n_varies" else n - 2  # index into sigma_1..sigma_n
    eig = eigenframe(tensor, x)
    lam = eig.lambdas
    sigma = elementary_symmetric(lam)  # [N, n] = sigma_1..sigma_n
    std, limit = _constancy(sigma)
    fixed = [k for k in range(n) if k != varying]
    bad = [k + 1 for k in fixed if not std[k] <= limit[k]]
    if bad:
        raise HypothesisViolated(
            f"sigma_{bad} not constant over the samples (std {[float(std[k - 1]) for k in bad]})"
        )
    codazzi_max = _require_codazzi(tensor, x, codazzi_tolerance)

    rule = eigenframe_rule(tensor)

    def chunk(p):
        ts = _TensorStencil(tensor, p, rule)
        h_fn = lambda off: elementary_symmetric(np.diagonal(ts.comp(off), axis1=-2, axis2=-1))[:, varying]  # noqa: E731
        return ts.directional(h_fn)

    hk = np.concatenate(_map_chunks(chunk, x))  # [N, k]

    if mode == "sigma_n_varies":
        coef = coeff_c(lam).table
        weights = weight_v(lam).table
        quad = quad_L(lam)
    else:
        coef = coeff_b(lam).table
        weights = weight_u(lam).table
        quad = quad_G(lam)
    mult = lambda_gradient_coefficients(lam, mode)  # [N, i]

    lam_res = np.max(np.abs(eig.lambda_grad - mult[:, :, None] * hk[:, None, :]), axis=(1, 2))
    gii = np.einsum("niik->nik", eig.gamma)
    pred = np.where(_offdiag_mask(n), np.nan_to_num(coef) * hk[:, None, :], 0.0)
    gam_res = np.max(np.where(_offdiag_mask(n), np.abs(gii - pred), 0.0), axis=(1, 2))
    x_frame = np.einsum("niik->nk", eig.gamma)
    x_res = np.abs(np.sum(x_frame * hk, axis=1) - np.sum(weights * hk**2, axis=1))
    psi_res = np.abs(psi_from_gamma(eig.gamma) - 0.5 * np.sum(quad * hk**2, axis=1))
    meta = {
        "field": tensor.name,
        "metric": tensor.metric.name,
        "mode": mode,
        "codazzi_max": codazzi_max,
        "sigma_std": std,
        "sigma_limit": limit,
        "gradient_max": float(np.max(np.abs(hk))),
    }
    return ReportSet(
        tuple(
            VerificationReport(name, x, res, tolerance, dict(meta))
            for name, res in (
                ("lambda-gradient", lam_res),
                ("gamma-gradient", gam_res),
                ("x-gradient", x_res),
                ("psi-quadratic", psi_res),
            )
        )
    )


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------


def flat_box(n: int, half_width: float = 1.0) -> ChartedMetric:
    """Euclidean metric on ``[-half_width, half_width]^n`` (non-periodic)."""
    return ChartedMetric.from_expressions(
        ["1"] * n, [-half_width] * n, [half_width] * n, name=f"flat-box-{n}"
    )


def swapped_linear_field(n: int = 4) -> SymmetricTensorField:
    """``a = diag(x2, x1, 0, ..., 0)`` on a flat box: not Codazzi.

    ``a_112 = d_2 a_11 = 1`` while ``a_121 = d_1 a_12 = 0``, so the Codazzi
    residual is 1 at every point.  (``diag(x1, x2, ...)`` would be the
    Hessian of ``(x1^3 + x2^3) / 6`` and therefore Codazzi.)
    """
    if n < 2:
        raise ValueError("n >= 2 required")
    diag = ["x2", "x1"] + ["0"] * (n - 2)
    return SymmetricTensorField.from_expressions(diag, flat_box(n), name=f"swapped-linear-{n}")


def twisted_field(n: int = 4, twist: float = 0.8) -> SymmetricTensorField:
    """``a = R(x) diag(1..n) R(x)^T`` on a flat box with a position-dependent rotation.

    ``R`` is a product of plane rotations ``R_{m, m+1}`` (``m < n - 1``) with
    angles ``twist * (x_m + x_{m+2 mod n})`` for ``m < n - 2`` and
    ``twist * (x_1 + x_2)`` for the last one.  The eigenframe (the columns of
    ``R``) twists along every axis, so the field is not Codazzi and its triple
    sum ``sum Gamma_ij^k Gamma_ji^k`` is non-zero.  For ``n = 4`` (the built-in)
    it stays in about ``[-0.81, -0.35]`` on the whole box; for other ``n`` it
    may cross zero.
    """
    if n < 3:
        raise ValueError("n >= 3 required")
    metric = flat_box(n, half_width=0.5)
    D = np.arange(1.0, n + 1.0)
    W = np.zeros((n - 1, n))
    for m in range(n - 2):
        W[m, m] = W[m, (m + 2) % n] = twist
    W[n - 2, 0] = W[n - 2, 1] = twist

    def rotation(x: np.ndarray) -> np.ndarray:
        R = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
        for m in range(n - 1):
            th = x @ W[m]
            c, s = np.cos(th), np.sin(th)
            G = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
            G[..., m, m] = c
            G[..., m, m + 1] = -s
            G[..., m + 1, m] = s
            G[..., m + 1, m + 1] = c
            R = R @ G
        return R

    def a(x: np.ndarray) -> np.ndarray:
        R = rotation(x)
        return (R * D[None, :]) @ np.swapaxes(R, -1, -2)

    return SymmetricTensorField(a=a, metric=metric, name=f"twisted-{n}")


@dataclass(frozen=True)
class StripFixture:
    """A Codazzi diagonal field on a warped strip.

    Attributes
    ----------
    field : SymmetricTensorField
        The tensor; its metric is ``dx1^2 + sum_i f_i(x1)^2 dx_i^2``.
    family : ShiftFamily
        Source of the eigenvalues: the roots of ``Q(x) + x1``.
    with_zero : bool
        Whether a constant zero eigenvalue is appended.
    direction : int
        Index (in ascending eigenvalue order along the strip) of the eigenvalue
        carried by ``d/dx1``.
    eigenvalues : callable
        ``t -> (len(t), n)`` ascending eigenvalues (Chebyshev interpolants).
    warps : callable
        ``t -> (len(t), n - 1)`` warping factors ``f_i``.
    """

    field: SymmetricTensorField
    family: ShiftFamily
    with_zero: bool
    direction: int
    eigenvalues: Callable[[np.ndarray], np.ndarray]
    warps: Callable[[np.ndarray], np.ndarray]


def codazzi_strip(
    Q: Union[str, MonicPolynomial],
    t_range: tuple[float, float],
    with_zero: bool = False,
    direction: Optional[int] = None,
    degree: int = 48,
    width: float = 1.0,
    name: Optional[str] = None,
) -> StripFixture:
    """Codazzi diagonal field whose eigenvalues solve ``Q(lambda) + t = 0``.

    The chart is ``x1 = t in t_range`` times ``[0, width]^(n-1)`` with metric
    ``dx1^2 + sum_i f_i(x1)^2 dx_i^2`` and field
    ``a = mu dx1^2 + sum_i lambda_i f_i^2 dx_i^2``, where ``mu`` is the
    eigenvalue carried by ``d/dx1``.  The warping factors solve
    ``f_i' / f_i = lambda_i' / (mu - lambda_i)``, which is exactly the Codazzi
    condition for such fields.  Eigenvalues are the polyfamily roots at
    Chebyshev nodes, interpolated by Chebyshev series; ``log f_i`` is the
    Chebyshev antiderivative.

    Since only the constant term of ``Q + t`` moves, ``sigma_1..sigma_{m-1}``
    of the ``m`` roots are constant.  With ``with_zero`` a zero eigenvalue is
    appended, so ``sigma_n = 0`` is constant and ``sigma_{n-1}`` varies.

    Parameters
    ----------
    Q : str or MonicPolynomial
        Monic polynomial with zero constant term.
    t_range : (float, float)
        Strip in ``t``; must lie inside the admissible interval of ``Q``.
    with_zero : bool
        Append a zero eigenvalue.
    direction : int, optional
        Which eigenvalue (ascending) rides on ``d/dx1``; defaults to the zero
        eigenvalue when ``with_zero`` and to the smallest root otherwise.
    degree : int
        Chebyshev degree.
    """
    family = ShiftFamily.from_expression(Q) if isinstance(Q, str) else ShiftFamily(Q)
    t0, t1 = (float(t) for t in t_range)
    lo, hi = family.t_range
    if not (lo < t0 < t1 < hi):
        raise ValueError(f"t_range {t_range} must lie inside the admissible interval ({lo}, {hi})")
    u = cheb.chebpts1(degree + 1)
    nodes = t0 + 0.5 * (u + 1.0) * (t1 - t0)
    rows = []
    for t in nodes:
        rs = roots_at(family, t)
        if not rs.simple:
            raise DegenerateSpectrum(f"Q + {t} has a multiple root")
        vals = list(rs.values) + ([0.0] if with_zero else [])
        rows.append(np.sort(vals))
    values = np.array(rows)  # [node, i]
    n = values.shape[1]
    _require_distinct(values)
    if direction is None:
        direction = int(np.argmin(np.abs(values[0]))) if with_zero else 0
    coef = cheb.chebfit(u, values, degree)  # [deg+1, n]
    dcoef = cheb.chebder(coef) * (2.0 / (t1 - t0))
    others = [i for i in range(n) if i != direction]
    lam_nodes = values
    dlam_nodes = cheb.chebval(u, dcoef).T
    rho = dlam_nodes[:, others] / (lam_nodes[:, [direction]] - lam_nodes[:, others])
    rcoef = cheb.chebfit(u, rho, degree)
    logf = cheb.chebint(rcoef, lbnd=-1.0) * (0.5 * (t1 - t0))
    dlogf = rcoef

    def to_u(t: np.ndarray) -> np.ndarray:
        return (2.0 * np.asarray(t, dtype=float) - (t0 + t1)) / (t1 - t0)

    def eigenvalues(t: np.ndarray) -> np.ndarray:
        return np.moveaxis(cheb.chebval(to_u(t), coef), 0, -1)

    def warps(t: np.ndarray) -> np.ndarray:
        return np.exp(np.moveaxis(cheb.chebval(to_u(t), logf), 0, -1))

    def g(x: np.ndarray) -> np.ndarray:
        f = warps(x[..., 0])
        out = np.zeros(x.shape[:-1] + (n, n))
        out[..., 0, 0] = 1.0
        for m in range(n - 1):
            out[..., m + 1, m + 1] = f[..., m] ** 2
        return out

    def dg(x: np.ndarray) -> np.ndarray:
        uu = to_u(x[..., 0])
        f = warps(x[..., 0])
        rate = np.moveaxis(cheb.chebval(uu, dlogf), 0, -1)  # f'/f
        out = np.zeros(x.shape[:-1] + (n, n, n))
        for m in range(n - 1):
            out[..., 0, m + 1, m + 1] = 2.0 * rate[..., m] * f[..., m] ** 2
        return out

    def a(x: np.ndarray) -> np.ndarray:
        lam = eigenvalues(x[..., 0])
        f = warps(x[..., 0])
        out = np.zeros(x.shape[:-1] + (n, n))
        out[..., 0, 0] = lam[..., direction]
        for m, i in enumerate(others):
            out[..., m + 1, m + 1] = lam[..., i] * f[..., m] ** 2
        return out

    label = name or f"strip[{family.Q.full_coeffs.tolist()}{'+0' if with_zero else ''}]"
    metric = ChartedMetric(
        dim=n,
        g=g,
        lower=[t0] + [0.0] * (n - 1),
        upper=[t1] + [width] * (n - 1),
        name=f"{label}-metric",
        dg=dg,
    )
    tensor = SymmetricTensorField(a=a, metric=metric, name=label)
    return StripFixture(
        field=tensor,
        family=family,
        with_zero=with_zero,
        direction=direction,
        eigenvalues=eigenvalues,
        warps=warps,
    )


def sigma_n_strip() -> StripFixture:
    """Built-in strip for ``sigma_n`` varying: ``Q = x^4 - 5x^2``, ``t in [3, 5]``."""
    return codazzi_strip("x^4 - 5x^2", (3.0, 5.0), name="strip-sigma-n")


def sigma_nm1_strip() -> StripFixture:
    """Built-in strip for ``sigma_{n-1}`` varying: roots of ``x^3 - 6x^2 + 11x + t`` plus 0, ``t in [-6.2, -5.8]``."""
    return codazzi_strip("x^3 - 6x^2 + 11x", (-6.2, -5.8), with_zero=True, name="strip-sigma-nm1")


BUILTIN_FIELDS: dict[str, Callable[[], SymmetricTensorField]] = {
    "strip-sigma-n": lambda: sigma_n_strip().field,
    "strip-sigma-nm1": lambda: sigma_nm1_strip().field,
    "swapped-linear-4": lambda: swapped_linear_field(4),
    "twisted-4": lambda: twisted_field(4),
    "constant-diag-3": lambda: SymmetricTensorField.from_expressions(["1", "2", "3"], flat_box(3), name="constant-diag-3"),
}


def builtin_field(name: str) -> SymmetricTensorField:
    """Look up a built-in tensor field by name."""
    try:
        return BUILTIN_FIELDS[name]()
    except KeyError:
        raise KeyError(f"unknown field {name!r}; known: {', '.join(sorted(BUILTIN_FIELDS))}") from None
