"""Hypersurfaces of the unit sphere given by a chart parametrisation.

An :class:`Immersion` maps a coordinate box of dimension ``n`` into the unit
sphere ``S^{n+1}`` of ``R^{n+2}``.  At each sample point the module computes
the induced metric ``g = df^T df``, a unit normal ``nu`` tangent to the
sphere, the second fundamental form ``II_ab = <d_a d_b f, nu>``, the shape
operator ``g^{-1} II``, its eigenvalues (principal curvatures) and the
normalised mean curvatures ``H_r = sigma_r / C(n, r)``.

Orientation: ``nu`` is the last column of a complete QR factorisation of
``[f, df]``, with its sign chosen so that ``det[f, df, nu] > 0``.  This rule
is invariant under the chart's own continuity, so curvature signs never flip
between samples of a connected chart.

The Gauss equation in the unit sphere gives the scalar curvature
``S = n(n - 1) + sigma_1^2 - |A|^2 = n(n - 1) + 2 sigma_2``; it can be
cross-checked against the intrinsic curvature of the induced metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .codazzi import SymmetricTensorField, codazzi_residual
from .errors import BadParameters, RankDeficient
from .expr import Expression, compile_components
from .geometry import DEFAULT_STEP, ChartedMetric, _as_batch, _squeeze, gram_schmidt, identity_terms
from .report import VerificationReport
from .sympoly import Spectrum, elementary_symmetric

#: Relative H_r standard deviation below which a hypersurface counts as isoparametric.
ISOPARAMETRIC_RTOL = 1e-8
#: Smallest accepted ratio of extreme singular values of ``df``.
RANK_RTOL = 1e-8

ImmersionCallback = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Immersion:
    """A parametrised hypersurface ``f: box in R^n -> S^{n+1} in R^{n+2}``.

    Parameters
    ----------
    n : int
        Intrinsic dimension.
    f : callable
        Points ``(N, n)`` to unit vectors ``(N, n + 2)``.
    lower, upper : array_like
        Chart box.
    periodic : tuple of bool
        Per-axis periodicity.
    name : str
    df, d2f : callable, optional
        Analytic derivatives ``df(x)[N, A, a] = d_a f^A`` and
        ``d2f(x)[N, A, a, b]``; central differences with step ``h`` are used
        when absent.
    h : float
        Central-difference step.
    fd_order : {2, 4}
        Order of the central differences used by the induced metric.
    """

    n: int
    f: ImmersionCallback
    lower: np.ndarray
    upper: np.ndarray
    periodic: tuple = ()
    name: str = "immersion"
    df: Optional[ImmersionCallback] = None
    d2f: Optional[ImmersionCallback] = None
    h: float = DEFAULT_STEP
    fd_order: int = 2
    expressions: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float).reshape(self.n)
        hi = np.asarray(self.upper, dtype=float).reshape(self.n)
        if np.any(hi <= lo):
            raise ValueError("empty chart box")
        per = tuple(bool(p) for p in self.periodic) if self.periodic else (False,) * self.n
        if len(per) != self.n:
            raise ValueError("periodic must have one flag per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "periodic", per)

    @property
    def ambient_dim(self) -> int:
        return self.n + 2

    @classmethod
    def from_expressions(
        cls,
        components: Sequence[Union[str, Expression]],
        lower: Sequence[float],
        upper: Sequence[float],
        periodic: Optional[Sequence[bool]] = None,
        coordinates: Optional[Sequence[str]] = None,
        name: str = "immersion",
        fd_order: int = 2,
    ) -> "Immersion":
        """Build an immersion from ``n + 2`` component expressions (analytic derivatives)."""
        comps = [c if isinstance(c, Expression) else Expression(str(c)) for c in components]
        n = len(comps) - 2
        if n < 1:
            raise ValueError("an immersion needs at least three components")
        names = list(coordinates) if coordinates else [f"x{i + 1}" for i in range(n)]
        if len(names) != n:
            raise ValueError(f"{len(comps)} components need {n} coordinates")
        first = [[c.diff(v) for v in names] for c in comps]
        second = [[[d.diff(v) for v in names] for d in row] for row in first]
        ev_f = compile_components(comps, names)
        ev_d = compile_components([d for row in first for d in row], names)
        ev_dd = compile_components([e for row in second for sub in row for e in sub], names)
        m = n + 2

        def df(x: np.ndarray) -> np.ndarray:
            return ev_d(x).reshape(x.shape[:-1] + (m, n))

        def d2f(x: np.ndarray) -> np.ndarray:
            return ev_dd(x).reshape(x.shape[:-1] + (m, n, n))

        return cls(
            n=n,
            f=ev_f,
            lower=lower,
            upper=upper,
            periodic=tuple(periodic) if periodic is not None else (False,) * n,
            name=name,
            df=df,
            d2f=d2f,
            fd_order=fd_order,
            expressions=tuple(str(c) for c in comps),
        )

    # -- derivatives ----------------------------------------------------------

    def _fd(self, fn: ImmersionCallback, x: np.ndarray) -> np.ndarray:
        """Central differences of ``fn`` along every coordinate, new last axis."""
        cols = []
        for a in range(self.n):
            step = np.zeros(self.n)
            step[a] = self.h
            cols.append((fn(x + step) - fn(x - step)) / (2.0 * self.h))
        return np.stack(cols, axis=-1)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """``df[N, A, a]``."""
        return self.df(x) if self.df is not None else self._fd(self.f, x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """``d2f[N, A, a, b]``."""
        if self.d2f is not None:
            return self.d2f(x)
        H = self._fd(self.jacobian, x)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    # -- derived objects --------------------------------------------------------

    def chart(self) -> ChartedMetric:
        """The induced metric as a :class:`ChartedMetric` (analytic first derivatives)."""

        def g(x: np.ndarray) -> np.ndarray:
            J = self.jacobian(x)
            return np.swapaxes(J, -1, -2) @ J

        def dg(x: np.ndarray) -> np.ndarray:
            J = self.jacobian(x)  # [N, A, b]
            H = self.hessian(x)  # [N, A, a, b]
            t = np.einsum("nAab,nAc->nabc", H, J)
            return t + np.swapaxes(t, -1, -2)

        return ChartedMetric(
            dim=self.n,
            g=g,
            lower=self.lower,
            upper=self.upper,
            periodic=self.periodic,
            name=f"induced[{self.name}]",
            dg=dg,
            derivative_mode="analytic",
            h=self.h,
            fd_order=self.fd_order,
        )

    def sample_grid(self, shape, guard: Optional[float] = None) -> np.ndarray:
        """Uniform grid over the chart (see :meth:`ChartedMetric.sample_grid`)."""
        return self.chart().sample_grid(shape, guard)

    def unit_defect(self, points) -> np.ndarray:
        """``| |f| - 1 |`` at the points."""
        x, single = _as_batch(self.chart(), points)
        return _squeeze(np.abs(np.linalg.norm(self.f(x), axis=-1) - 1.0), single)


@dataclass(frozen=True)
class ShapeSample:
    """Extrinsic data of a hypersurface at sample points.

    Attributes
    ----------
    induced_g, second_ff, shape : ndarray, shape (..., n, n)
        ``g``, ``II`` and ``g^{-1} II``.
    principal : ndarray, shape (..., n)
        Ascending principal curvatures.
    H : ndarray, shape (..., n)
        ``H_1..H_n``.
    normal : ndarray, shape (..., n + 2)
    """

    point: np.ndarray
    induced_g: np.ndarray
    second_ff: np.ndarray
    shape: np.ndarray
    principal: np.ndarray
    H: np.ndarray
    normal: np.ndarray

    @property
    def spectrum(self) -> Spectrum:
        """Principal curvatures as a :class:`Spectrum` (single point only)."""
        if self.principal.ndim != 1:
            raise ValueError("spectrum is only defined for a single sample point")
        return Spectrum(self.principal)

    @property
    def self_adjoint_residual(self) -> np.ndarray:
        """``max |g S - (g S)^T|``."""
        gS = self.induced_g @ self.shape
        return np.max(np.abs(gS - np.swapaxes(gS, -1, -2)), axis=(-2, -1))


def _binomials(n: int) -> np.ndarray:
    return np.array([math.comb(n, r) for r in range(1, n + 1)], dtype=float)


def _unit_normal(f: np.ndarray, J: np.ndarray) -> np.ndarray:
    M = np.concatenate([f[..., :, None], J], axis=-1)  # [N, m, n + 1]
    Q, _ = np.linalg.qr(M, mode="complete")
    nu = Q[..., :, -1]
    det = np.linalg.det(np.concatenate([M, nu[..., :, None]], axis=-1))
    return nu * np.where(det < 0.0, -1.0, 1.0)[..., None]


def shape_sample(imm: Immersion, point) -> ShapeSample:
    """Induced metric, second fundamental form, principal and mean curvatures.

    Raises
    ------
    RankDeficient
        If ``df`` loses rank at some sample point.
    """
    x, single = _as_batch(imm.chart(), point)
    f = imm.f(x)
    J = imm.jacobian(x)
    sv = np.linalg.svd(J, compute_uv=False)
    if np.any(sv[..., -1] <= RANK_RTOL * sv[..., 0]):
        raise RankDeficient(f"df of {imm.name!r} drops rank at some sample point")
    nu = _unit_normal(f, J)
    g = np.swapaxes(J, -1, -2) @ J
    II = np.einsum("nAab,nA->nab", imm.hessian(x), nu)
    II = 0.5 * (II + np.swapaxes(II, -1, -2))
    S = np.linalg.solve(g, II)
    E = gram_schmidt(g)
    principal = np.linalg.eigvalsh(np.swapaxes(E, -1, -2) @ II @ E)
    H = elementary_symmetric(principal) / _binomials(imm.n)
    return ShapeSample(
        point=_squeeze(x, single),
        induced_g=_squeeze(g, single),
        second_ff=_squeeze(II, single),
        shape=_squeeze(S, single),
        principal=_squeeze(principal, single),
        H=_squeeze(H, single),
        normal=_squeeze(nu, single),
    )


def gauss_scalar(sample: ShapeSample) -> Union[float, np.ndarray]:
    """Scalar curvature ``n(n - 1) + (sum lambda_i)^2 - sum lambda_i^2`` from the Gauss equation."""
    lam = np.asarray(sample.principal)
    n = lam.shape[-1]
    S = n * (n - 1) + np.sum(lam, axis=-1) ** 2 - np.sum(lam**2, axis=-1)
    return float(S) if np.ndim(S) == 0 else S


def shape_field(imm: Immersion) -> SymmetricTensorField:
    """The second fundamental form as a tensor field on the induced metric."""
    chart = imm.chart()

    def a(x: np.ndarray) -> np.ndarray:
        J = imm.jacobian(x)
        nu = _unit_normal(imm.f(x), J)
        II = np.einsum("nAab,nA->nab", imm.hessian(x), nu)
        return 0.5 * (II + np.swapaxes(II, -1, -2))

    return SymmetricTensorField(a=a, metric=chart, name=f"II[{imm.name}]")


def intrinsic_scalar(imm: Immersion, points) -> np.ndarray:
    """Scalar curvature of the induced metric computed intrinsically."""
    x, single = _as_batch(imm.chart(), points)
    return _squeeze(identity_terms(imm.chart(), x, check=False).scalar, single)


def isoparametric_check(
    imm: Immersion,
    grid: Union[int, Sequence[int], np.ndarray] = 8,
    expect_pass: bool = True,
    with_codazzi: bool = True,
    with_intrinsic: bool = False,
) -> VerificationReport:
    """Constancy of every ``H_r`` over a sample grid.

    The report has one row per ``r = 1..n``; its residual is the sample
    standard deviation of ``H_r`` divided by ``1 + |mean H_r|`` and the
    tolerance is :data:`ISOPARAMETRIC_RTOL`, so ``passed`` is the
    isoparametric verdict.  Metadata holds the means, the largest pointwise
    deviation ``max |H_r - mean H_r|``, the minimum Gauss scalar curvature,
    the shape-operator Codazzi residual (``with_codazzi``) and the largest
    difference between the Gauss and intrinsic scalar curvatures
    (``with_intrinsic``).

    Parameters
    ----------
    grid : int, sequence of int, or array of points
        Grid shape for :meth:`Immersion.sample_grid`, or explicit points.
    """
    pts = np.asarray(grid, dtype=float)
    if pts.ndim == 2:
        x = pts
    else:
        x = imm.sample_grid(grid if np.ndim(grid) else int(grid))
    sample = shape_sample(imm, x)
    H = np.atleast_2d(sample.H)
    mean = H.mean(axis=0)
    std = H.std(axis=0)
    deviation = np.max(np.abs(H - mean), axis=0)
    scalar = np.atleast_1d(gauss_scalar(sample))
    meta = {
        "immersion": imm.name,
        "n": imm.n,
        "n_points": int(x.shape[0]),
        "H_mean": mean,
        "H_std": std,
        "H_max_deviation": float(np.max(deviation)),
        "principal_mean": np.atleast_2d(sample.principal).mean(axis=0),
        "scalar_min": float(np.min(scalar)),
        "scalar_max": float(np.max(scalar)),
        "unit_defect": float(np.max(imm.unit_defect(x))),
        "self_adjoint": float(np.max(sample.self_adjoint_residual)),
    }
    if with_codazzi:
        meta["codazzi_max"] = float(np.max(codazzi_residual(shape_field(imm), x)))
    if with_intrinsic:
        meta["gauss_intrinsic_max"] = float(np.max(np.abs(intrinsic_scalar(imm, x) - scalar)))
    r = np.arange(1, imm.n + 1, dtype=float)
    return VerificationReport(
        identity="h_r-constancy",
        points=r[:, None],
        residuals=std / (1.0 + np.abs(mean)),
        tolerance=ISOPARAMETRIC_RTOL,
        metadata=meta,
        expect_pass=expect_pass,
    )


# ---------------------------------------------------------------------------
# factories
# ---------------------------------------------------------------------------

POLAR_GUARD = 0.2
TWO_PI = 2.0 * math.pi


def _sphere_chart(k: int, names: Sequence[str]) -> tuple[list[str], list[float], list[float], list[bool]]:
    """Hyperspherical parametrisation of ``S^k`` in ``R^{k+1}`` as expressions.

    The first ``k - 1`` angles are polar (guarded), the last is azimuthal.
    """
    if k == 0:
        raise ValueError("k >= 1 required")
    comps = []
    prefix = ""
    for i in range(k - 1):
        comps.append(f"{prefix}cos({names[i]})")
        prefix = f"{prefix}sin({names[i]}) * "
    comps.append(f"{prefix}cos({names[k - 1]})")
    comps.append(f"{prefix}sin({names[k - 1]})")
    lower = [POLAR_GUARD] * (k - 1) + [0.0]
    upper = [math.pi - POLAR_GUARD] * (k - 1) + [TWO_PI]
    periodic = [False] * (k - 1) + [True]
    return comps, lower, upper, periodic


def _polar_order(periodic: Sequence[bool]) -> int:
    # near the polar guard, second-order truncation of the induced curvature
    # reaches 1e-5 (n = 2) to 1e-4 (n >= 3); fourth order keeps it near 1e-9.
    # Charts with periodic axes only (the flat tori) are exact at second order.
    return 2 if all(periodic) else 4


def clifford_torus(p: int, q: int, r: float) -> Immersion:
    """``S^p(r) x S^q(s)`` in ``S^{p+q+1}``, ``s = sqrt(1 - r^2)``.

    Principal curvatures are ``-s/r`` (multiplicity ``p``) and ``r/s``
    (multiplicity ``q``) up to a common sign; the torus is minimal for
    ``r = sqrt(p / (p + q))``.

    Raises
    ------
    BadParameters
        Unless ``p, q >= 1`` and ``0 < r < 1``.
    """
    if int(p) != p or int(q) != q or p < 1 or q < 1:
        raise BadParameters("p and q must be positive integers")
    if not 0.0 < r < 1.0:
        raise BadParameters("r must lie in (0, 1)")
    p, q, r = int(p), int(q), float(r)
    s = math.sqrt(1.0 - r * r)
    names = [f"x{i + 1}" for i in range(p + q)]
    cu, lu, uu, pu = _sphere_chart(p, names[:p])
    cw, lw, uw, pw = _sphere_chart(q, names[p:])
    comps = [f"{r!r} * {c}" for c in cu] + [f"{s!r} * {c}" for c in cw]
    return Immersion.from_expressions(
        comps, lu + lw, uu + uw, periodic=pu + pw, name=f"clifford-{p}-{q}-r{r:.6g}", fd_order=_polar_order(pu + pw)
    )


def equatorial_sphere(n: int = 2) -> Immersion:
    """Totally geodesic ``S^n`` in ``S^{n+1}`` (last ambient coordinate zero)."""
    comps, lo, hi, per = _sphere_chart(n, [f"x{i + 1}" for i in range(n)])
    return Immersion.from_expressions(
        comps + ["0"], lo, hi, periodic=per, name=f"equatorial-s{n}", fd_order=_polar_order(per)
    )


def small_sphere(theta: float = 1.0, n: int = 2) -> Immersion:
    """``S^n`` of radius ``sin(theta)`` at polar angle ``theta``: principal curvatures ``cot(theta)`` up to sign."""
    if not 0.0 < theta < math.pi:
        raise BadParameters("theta must lie in (0, pi)")
    comps, lo, hi, per = _sphere_chart(n, [f"x{i + 1}" for i in range(n)])
    theta = float(theta)
    st, ct = math.sin(theta), math.cos(theta)
    comps = [f"{st!r} * {c}" for c in comps] + [repr(ct)]
    return Immersion.from_expressions(
        comps, lo, hi, periodic=per, name=f"small-sphere-{n}-theta{theta:g}", fd_order=_polar_order(per)
    )


def perturbed_clifford(amplitude: float = 0.05, r: float = 1.0 / math.sqrt(2.0)) -> Immersion:
    """Normal graph over the ``S^1(r) x S^1(s)`` torus, renormalised onto the sphere.

    ``f = (f0 + eps b nu0) / sqrt(1 + eps^2 b^2)`` with ``nu0 = (s u, -r w)``
    and ``b = cos(x1) cos(2 x2)``; not isoparametric for ``eps != 0``.
    """
    r = float(r)
    s = math.sqrt(1.0 - r * r)
    b = "(cos(x1) * cos(2*x2))"
    eps = repr(float(amplitude))
    norm = f"sqrt(1 + {eps}^2 * {b}^2)"
    f0 = [f"{r!r} * cos(x1)", f"{r!r} * sin(x1)", f"{s!r} * cos(x2)", f"{s!r} * sin(x2)"]
    nu0 = [f"{s!r} * cos(x1)", f"{s!r} * sin(x1)", f"(-{r!r}) * cos(x2)", f"(-{r!r}) * sin(x2)"]
    comps = [f"({a} + {eps} * {b} * {v}) / {norm}" for a, v in zip(f0, nu0)]
    return Immersion.from_expressions(
        comps, [0.0, 0.0], [TWO_PI, TWO_PI], periodic=[True, True], name=f"perturbed-clifford-eps{amplitude:g}"
    )


#: Built-in hypersurfaces; the value is ``(factory, isoparametric?)``.
BUILTIN_IMMERSIONS: dict[str, tuple[Callable[[], Immersion], bool]] = {
    "equatorial-s2": (lambda: equatorial_sphere(2), True),
    "equatorial-s3": (lambda: equatorial_sphere(3), True),
    "small-sphere": (lambda: small_sphere(1.0, 2), True),
    "clifford-1-1": (lambda: clifford_torus(1, 1, 1.0 / math.sqrt(2.0)), True),
    "clifford-1-1-r0.6": (lambda: clifford_torus(1, 1, 0.6), True),
    "clifford-1-2": (lambda: clifford_torus(1, 2, 1.0 / math.sqrt(3.0)), True),
    "clifford-2-1": (lambda: clifford_torus(2, 1, math.sqrt(2.0 / 3.0)), True),
    "clifford-2-2": (lambda: clifford_torus(2, 2, 1.0 / math.sqrt(2.0)), True),
    "clifford-1-3-r0.4": (lambda: clifford_torus(1, 3, 0.4), True),
    "perturbed-clifford": (lambda: perturbed_clifford(0.05), False),
}

CLIFFORD_NAMES = tuple(k for k in BUILTIN_IMMERSIONS if k.startswith("clifford-"))


def builtin_immersion(name: str) -> Immersion:
    """Look up a built-in immersion by name."""
    try:
        return BUILTIN_IMMERSIONS[name][0]()
    except KeyError:
        known = ", ".join(sorted(BUILTIN_IMMERSIONS))
        raise KeyError(f"unknown immersion {name!r}; known: {known}") from None


def is_isoparametric_fixture(name: str) -> bool:
    """Whether a built-in immersion is expected to be isoparametric."""
    return BUILTIN_IMMERSIONS[name][1]
