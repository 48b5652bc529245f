"""Chart-based Riemannian geometry with orthonormal frames.

For a metric ``g`` on a coordinate box this module computes coordinate
Christoffel symbols, a Gram--Schmidt orthonormal frame ``e_1..e_n`` and its
connection coefficients ``Gamma_ij^k = <nabla_{e_i} e_j, e_k>``, the field
``X = sum_i nabla_{e_i} e_i``, its divergence, the scalar curvature ``S``
and the quadratic functional::

    Psi = sum_{i<j} sum_{k != i, j} (Gamma_ii^k Gamma_jj^k - Gamma_ij^k Gamma_ji^k)

which together satisfy ``div X = S/2 - Psi``.

Conventions
-----------
* ``christoffel[c, a, b] = Gamma^c_{ab}``.
* Frame matrices hold the coordinate components of ``e_j`` in column ``j``.
* ``gamma[i, j, k] = Gamma_ij^k``.
* ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z`` and
  ``riemann[i, j, k, l] = <R(e_i, e_j) e_k, e_l>``, so that
  ``S = sum_ij riemann[i, j, j, i]``.

Metric derivatives are central differences with an absolute step ``h``
(second order by default; metrics may supply analytic first derivatives
instead).  Gram--Schmidt frames are differentiated through the exact
differential of the orthonormalisation applied to ``d_a g``; any other frame
rule is differenced directly.  Every
function accepts a single point of shape ``(n,)`` or a batch ``(N, n)``;
batches are processed in chunks, optionally on a thread pool whose size is
read from the ``FRAMEDIV_WORKERS`` environment variable.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import NotClosed, SingularMetric, StepTooLarge
from .expr import Expression, compile_components
from .report import VerificationReport

DEFAULT_STEP = 1e-4
#: Number of sample points handled per vectorised chunk.
CHUNK_SIZE = 16384
#: Antisymmetry residual of Gamma above which the step is declared too large.
ANTISYMMETRY_LIMIT = 1e-6

MetricCallback = Callable[[np.ndarray], np.ndarray]
#: ``frame_rule(points, g) -> frames``; both arrays batched over points.
FrameRule = Callable[[np.ndarray, np.ndarray], np.ndarray]

#: Central-difference weights ``(shift, weight)`` by order of accuracy.
_FD_WEIGHTS = {2: ((1, 0.5),), 4: ((1, 2.0 / 3.0), (2, -1.0 / 12.0))}


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartedMetric:
    """A Riemannian metric on a coordinate box.

    Parameters
    ----------
    dim : int
        Dimension ``n``.
    g : callable
        Maps points ``(N, n)`` to metric matrices ``(N, n, n)``.
    lower, upper : array_like
        Corners of the coordinate box.
    periodic : tuple of bool
        Per-axis periodicity; a periodic axis has period ``upper - lower``.
    name : str
        Used in reports.
    dg : callable, optional
        Analytic derivatives, ``dg(x)[N, a, b, c] = d_a g_bc``.
    derivative_mode : {"fd", "analytic"}
        Whether first derivatives of ``g`` come from central differences or
        from ``dg``.
    h : float
        Central-difference step (absolute, in coordinate units).
    fd_order : {2, 4}
        Order of accuracy of the central differences.
    """

    dim: int
    g: MetricCallback
    lower: np.ndarray
    upper: np.ndarray
    periodic: tuple = ()
    name: str = "metric"
    dg: Optional[MetricCallback] = None
    derivative_mode: str = "fd"
    h: float = DEFAULT_STEP
    fd_order: int = 2
    expressions: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float).reshape(self.dim)
        hi = np.asarray(self.upper, dtype=float).reshape(self.dim)
        if np.any(hi <= lo):
            raise ValueError("empty coordinate box")
        per = tuple(bool(p) for p in self.periodic) if self.periodic else (False,) * self.dim
        if len(per) != self.dim:
            raise ValueError("periodic must have one flag per axis")
        if self.derivative_mode not in ("fd", "analytic"):
            raise ValueError("derivative_mode must be 'fd' or 'analytic'")
        if self.derivative_mode == "analytic" and self.dg is None:
            raise ValueError("analytic derivative mode needs a dg callback")
        if self.fd_order not in _FD_WEIGHTS:
            raise ValueError(f"fd_order must be one of {sorted(_FD_WEIGHTS)}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "periodic", per)

    @classmethod
    def from_expressions(
        cls,
        components,
        lower: Sequence[float],
        upper: Sequence[float],
        periodic: Optional[Sequence[bool]] = None,
        coordinates: Optional[Sequence[str]] = None,
        name: str = "metric",
        h: float = DEFAULT_STEP,
        derivative_mode: str = "fd",
    ) -> "ChartedMetric":
        """Build a metric from expression strings.

        ``components`` is either a list of ``n`` diagonal entries or an
        ``n x n`` nested list; only the upper triangle of a full matrix is
        read.  Coordinates default to ``x1..xn``.  Analytic first derivatives
        are derived symbolically and attached as ``dg``.
        """
        matrix = _component_matrix(components)
        n = len(matrix)
        names = list(coordinates) if coordinates else [f"x{i + 1}" for i in range(n)]
        if len(names) != n:
            raise ValueError("one coordinate name per dimension is required")
        flat = [matrix[i][j] for i in range(n) for j in range(n)]
        evaluate = compile_components(flat, names)
        derivs = [e.diff(v) for v in names for e in flat]
        evaluate_d = compile_components(derivs, names)

        def g(x: np.ndarray) -> np.ndarray:
            return evaluate(x).reshape(x.shape[:-1] + (n, n))

        def dg(x: np.ndarray) -> np.ndarray:
            return evaluate_d(x).reshape(x.shape[:-1] + (n, n, n))

        return cls(
            dim=n,
            g=g,
            lower=lower,
            upper=upper,
            periodic=tuple(periodic) if periodic is not None else (False,) * n,
            name=name,
            dg=dg,
            derivative_mode=derivative_mode,
            h=h,
            expressions=tuple(tuple(str(e) for e in row) for row in matrix),
        )

    def with_mode(self, derivative_mode: str) -> "ChartedMetric":
        """Copy using another derivative mode."""
        return dataclasses.replace(self, derivative_mode=derivative_mode)

    def with_step(self, h: float, fd_order: Optional[int] = None) -> "ChartedMetric":
        """Copy using another finite-difference step (and optionally order)."""
        return dataclasses.replace(self, h=h, fd_order=self.fd_order if fd_order is None else fd_order)

    def __call__(self, x) -> np.ndarray:
        return self.g(np.asarray(x, dtype=float))

    @property
    def closed(self) -> bool:
        return all(self.periodic)

    def sample_grid(self, shape: Union[int, Sequence[int]], guard: Optional[float] = None) -> np.ndarray:
        """Uniform grid of sample points, shape ``(prod(shape), n)``.

        Periodic axes are sampled without the duplicated endpoint;
        non-periodic axes stay ``guard`` (default ``5 h``) away from the box
        faces.
        """
        shape = (shape,) * self.dim if isinstance(shape, (int, np.integer)) else tuple(shape)
        if len(shape) != self.dim:
            raise ValueError(f"grid needs {self.dim} axis sizes, got {shape}")
        guard = 5.0 * self.h if guard is None else guard
        axes = []
        for k, lo, hi, per in zip(shape, self.lower, self.upper, self.periodic):
            if per:
                axes.append(lo + (hi - lo) * np.arange(k) / k)
            elif k == 1:
                axes.append(np.array([0.5 * (lo + hi)]))
            else:
                axes.append(np.linspace(lo + guard, hi - guard, k))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def random_points(self, rng: np.random.Generator, count: int, guard: Optional[float] = None) -> np.ndarray:
        """Uniform random points inside the guarded box."""
        guard = 5.0 * self.h if guard is None else guard
        lo = np.where(self.periodic, self.lower, self.lower + guard)
        hi = np.where(self.periodic, self.upper, self.upper - guard)
        return rng.uniform(lo, hi, size=(count, self.dim))


def _component_matrix(components) -> list[list[Expression]]:
    rows = list(components)
    if rows and all(isinstance(r, (str, int, float, Expression)) for r in rows):
        n = len(rows)
        return [
            [_as_expression(rows[i]) if i == j else Expression("0") for j in range(n)] for i in range(n)
        ]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValueError("metric components must form a square matrix")
    out = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            e = rows[i][j]
            out[i][j] = out[j][i] = _as_expression(e)
    return out


def _as_expression(e) -> Expression:
    return e if isinstance(e, Expression) else Expression(str(e))


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------


def gram_schmidt(g: np.ndarray) -> np.ndarray:
    """Orthonormalise the coordinate basis against ``g`` in index order.

    Returns frames ``E`` (``E[..., :, j]`` = components of ``e_j``) with
    ``E^T g E = I``; ``e_j`` lies in the span of ``d_1..d_j`` with a positive
    ``d_j`` component, so ``E`` is upper triangular with positive diagonal.

    Raises
    ------
    SingularMetric
        If some coordinate vector is (numerically) dependent on the previous
        ones, i.e. ``g`` is not positive definite.
    """
    return _gram_schmidt(g)[0]


def _gram_schmidt(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gram--Schmidt frame and inverse metric ``E E^T`` in one pass.

    Equivalent to ``E = L^{-T}`` for the Cholesky factor ``g = L L^T``; the
    recurrences run entry by entry on contiguous per-component arrays, which
    is far faster than batched tiny-matrix products.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[-1]
    lead = g.shape[:-2]
    gt = np.moveaxis(g.reshape((-1, n, n)), 0, -1).copy()  # [n, n, N]
    scale = np.max(np.abs(np.diagonal(gt, axis1=0, axis2=1)), axis=-1)
    L = [[None] * n for _ in range(n)]
    for j in range(n):
        d = gt[j, j] - sum(L[j][k] * L[j][k] for k in range(j)) if j else gt[j, j]
        if np.any(~(d > 1e-10 * scale)):
            raise SingularMetric("metric is not positive definite at some sample point")
        L[j][j] = np.sqrt(d)
        for i in range(j + 1, n):
            acc = gt[i, j] - sum(L[i][k] * L[j][k] for k in range(j)) if j else gt[i, j]
            L[i][j] = acc / L[j][j]
    # E[b][j] = (L^{-1})[j][b]
    E = [[np.zeros_like(scale) for _ in range(n)] for _ in range(n)]
    for i in range(n):
        inv_d = 1.0 / L[i][i]
        E[i][i] = inv_d
        for j in range(i):
            E[j][i] = -sum(L[i][k] * E[j][k] for k in range(j, i)) * inv_d
    ginv = [[None] * n for _ in range(n)]
    for a in range(n):
        for c in range(a, n):
            ginv[a][c] = ginv[c][a] = sum(E[a][j] * E[c][j] for j in range(c, n))
    E_arr = np.moveaxis(np.array(E), -1, 0).reshape(lead + (n, n))
    ginv_arr = np.moveaxis(np.array(ginv), -1, 0).reshape(lead + (n, n))
    return np.ascontiguousarray(E_arr), np.ascontiguousarray(ginv_arr)


@functools.lru_cache(maxsize=None)
def _lower_half_mask(n: int) -> np.ndarray:
    """Strict lower triangle of ones plus ``1/2`` on the diagonal."""
    return np.tril(np.ones((n, n)), -1) + 0.5 * np.eye(n)


def gram_schmidt_derivative(E: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Exact differential of the Gram--Schmidt frame.

    With ``g = L L^T`` and ``E = L^{-T}``, differentiating gives
    ``d_a E = -E Phi(E^T (d_a g) E)^T`` where ``Phi`` keeps the lower triangle
    and halves the diagonal.

    Parameters
    ----------
    E : ndarray, shape (N, n, n)
        Gram--Schmidt frames.
    dg : ndarray, shape (N, n, n, n)
        ``dg[:, a] = d_a g``.

    Returns
    -------
    ndarray, shape (N, n, n, n)
        ``dE[:, a, b, j] = d_a E^b_j``.
    """
    Ea = E[:, None]
    A = np.swapaxes(Ea, -1, -2) @ dg @ Ea
    n = E.shape[-1]
    phi = A * _lower_half_mask(n)
    return -Ea @ np.swapaxes(phi, -1, -2)


def gram_schmidt_rule(points: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Frame rule: Gram--Schmidt of the coordinate basis."""
    return gram_schmidt(g)


def rotated_frame_rule(rotation: Callable[[np.ndarray], np.ndarray]) -> FrameRule:
    """Frame rule ``E(x) R(x)``: Gram--Schmidt followed by a pointwise rotation.

    ``rotation`` maps points ``(N, n)`` to orthogonal matrices ``(N, n, n)``.
    """

    def rule(points: np.ndarray, g: np.ndarray) -> np.ndarray:
        return gram_schmidt(g) @ rotation(points)

    rule.needs_alignment = False  # type: ignore[attr-defined]
    return rule


gram_schmidt_rule.needs_alignment = False  # type: ignore[attr-defined]
gram_schmidt_rule.exact_derivative = True  # type: ignore[attr-defined]


def planar_rotation(angle: Callable[[np.ndarray], np.ndarray], axes: tuple[int, int] = (0, 1), n: int = 2):
    """Rotation by ``angle(x)`` in the plane of two frame axes."""
    a, b = axes

    def rotation(points: np.ndarray) -> np.ndarray:
        th = angle(points)
        R = np.broadcast_to(np.eye(n), points.shape[:-1] + (n, n)).copy()
        c, s = np.cos(th), np.sin(th)
        R[..., a, a] = c
        R[..., a, b] = -s
        R[..., b, a] = s
        R[..., b, b] = c
        return R

    return rotation


def align_columns(E: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Flip columns of ``E`` whose direction opposes the matching reference column."""
    dots = np.sum(E * reference, axis=-2)
    signs = np.where(dots < 0.0, -1.0, 1.0)
    return E * signs[..., None, :]


# ---------------------------------------------------------------------------
# stencil machinery
# ---------------------------------------------------------------------------




class _Stencil:
    """Lazily evaluated quantities at ``x + h * offset`` for integer offsets.

    All first derivatives are central differences between neighbouring
    offsets, so nested quantities (e.g. the divergence of ``X``, which needs
    the frame connection at neighbouring points) reuse cached evaluations.
    Internally Christoffel symbols are stored as ``chr[N, a, b, c] = Gamma^c_{ab}``
    and covariant derivatives of the frame as ``D[N, i, b, j] = (nabla_{e_i} e_j)^b``
    so that every contraction is a batched matrix product.
    """

    def __init__(self, metric: ChartedMetric, x: np.ndarray, frame_rule: FrameRule, h: float) -> None:
        self.metric = metric
        self.x = x
        self.N = x.shape[0]
        self.n = metric.dim
        self.h = h
        self.weights = _FD_WEIGHTS[metric.fd_order]
        self.rule = frame_rule
        self.align = getattr(frame_rule, "needs_alignment", True)
        self._cache: dict = {}
        self.zero = (0,) * self.n

    def shift(self, off: tuple, a: int, s: int) -> tuple:
        lst = list(off)
        lst[a] += s
        return tuple(lst)

    def points(self, off: tuple) -> np.ndarray:
        return self.x + self.h * np.asarray(off, dtype=float)

    def _memo(self, key, fn):
        try:
            return self._cache[key]
        except KeyError:
            val = fn()
            self._cache[key] = val
            return val

    def derivative(self, fn, off: tuple, a: int) -> np.ndarray:
        """Central difference of ``fn(offset)`` along coordinate ``a``."""
        total = 0.0
        for s, w in self.weights:
            total = total + w * (fn(self.shift(off, a, s)) - fn(self.shift(off, a, -s)))
        return total / self.h

    def central(self, kind: str, off: tuple) -> np.ndarray:
        """Stack of central differences ``d_a F`` along axis 1."""
        fn = getattr(self, kind)
        return np.stack([self.derivative(fn, off, a) for a in range(self.n)], axis=1)

    def g(self, off: tuple) -> np.ndarray:
        return self._memo(("g", off), lambda: self.metric.g(self.points(off)))

    def gs(self, off: tuple) -> np.ndarray:
        return self._gs_pair(off)[0]

    def _gs_pair(self, off: tuple) -> tuple[np.ndarray, np.ndarray]:
        return self._memo(("gs", off), lambda: _gram_schmidt(self.g(off)))

    def ginv(self, off: tuple) -> np.ndarray:
        return self._gs_pair(off)[1]

    def sqrt_det(self, off: tuple) -> np.ndarray:
        # for the Gram-Schmidt frame det E = prod diag E = 1 / sqrt(det g)
        return self._memo(
            ("vol", off), lambda: 1.0 / np.prod(np.diagonal(self.gs(off), axis1=-2, axis2=-1), axis=-1)
        )

    def dg(self, off: tuple) -> np.ndarray:
        """``dg[N, a, b, c] = d_a g_bc``."""
        if self.metric.derivative_mode == "analytic":
            return self._memo(("dg", off), lambda: self.metric.dg(self.points(off)))
        return self._memo(("dg", off), lambda: self.central("g", off))

    def christoffel(self, off: tuple) -> np.ndarray:
        """``chr[N, a, b, c] = Gamma^c_{ab}``."""

        def compute():
            n = self.n
            dg = self.dg(off)
            ginv = self.ginv(off)
            # P[a, b, c] = d_a g_bd g^dc ;  Q[c, a, b] = g^cd d_d g_ab
            P = (dg.reshape(-1, n * n, n) @ ginv).reshape(-1, n, n, n)
            Q = (ginv @ dg.reshape(-1, n, n * n)).reshape(-1, n, n, n)
            return 0.5 * (P + np.swapaxes(P, 1, 2) - np.transpose(Q, (0, 2, 3, 1)))

        return self._memo(("chr", off), compute)

    def frame(self, off: tuple) -> np.ndarray:
        def compute():
            if getattr(self.rule, "exact_derivative", False):
                return self.gs(off)
            E = self.rule(self.points(off), self.g(off))
            if self.align and off != self.zero:
                E = align_columns(E, self.frame(self.zero))
            return E

        return self._memo(("E", off), compute)

    def dframe(self, off: tuple) -> np.ndarray:
        """``dE[N, a, b, j] = d_a E^b_j``.

        Gram--Schmidt frames are differentiated exactly through ``d_a g``;
        any other frame rule by central differences of its output.
        """
        if getattr(self.rule, "exact_derivative", False):
            return gram_schmidt_derivative(self.frame(off), self.dg(off))
        return self.central("frame", off)

    def nabla(self, off: tuple) -> np.ndarray:
        """``D[N, i, b, j]``: coordinate component ``b`` of ``nabla_{e_i} e_j``."""

        def compute():
            n = self.n
            E = self.frame(off)
            dE = self.dframe(off)  # [N, a, b, j] = d_a E^b_j
            chr_ = self.christoffel(off)  # [N, a, c, b] = Gamma^b_ac
            inner = dE + np.swapaxes(chr_, -1, -2) @ E[:, None]  # [N, a, b, j]
            return (np.swapaxes(E, -1, -2) @ inner.reshape(-1, n, n * n)).reshape(-1, n, n, n)

        return self._memo(("D", off), compute)

    def gamma(self, off: tuple) -> np.ndarray:
        """``Gamma[N, i, j, k] = <nabla_{e_i} e_j, e_k>``."""

        def compute():
            gE = self.g(off) @ self.frame(off)  # [N, b, k]
            return np.swapaxes(self.nabla(off), -1, -2) @ gE[:, None]

        return self._memo(("Gamma", off), compute)

    def x_coord(self, off: tuple) -> np.ndarray:
        """Coordinate components of ``X = sum_i nabla_{e_i} e_i``."""


        def compute():
            # X^b = sum_{a,i} E^a_i d_a E^b_i + g^{ac} Gamma^b_ac
            n = self.n
            E = self.frame(off)
            if getattr(self.rule, "exact_derivative", False):
                # sum_{a,i} E^a_i d_a E^b_i = -(E w)^b with w_m = sum_{i>m} T_iim + T_mmm / 2,
                # where T_ijk = E^a_i E^b_j E^c_k d_a g_bc (see gram_schmidt_derivative)
                Et = np.swapaxes(E, -1, -2)
                U = self.dg(off).reshape(-1, n * n, n) @ E  # [a, b, m]
                V = (Et @ U.reshape(-1, n, n * n)).reshape(-1, n, n, n)  # [i, b, m]
                T_iim = (Et[:, :, None, :] @ V)[:, :, 0]  # [i, m]
                w = np.ones(n) @ (T_iim * _lower_half_mask(n))
                first = -(E @ w[..., None])[..., 0]
            else:
                dE = self.dframe(off)
                first = np.sum((dE @ E[:, :, :, None])[..., 0], axis=1)
            second = (self.ginv(off).reshape(-1, 1, n * n) @ self.christoffel(off).reshape(-1, n * n, n))[:, 0]
            return first + second

        return self._memo(("X", off), compute)

    def flux(self, a: int):
        return lambda off: self.sqrt_det(off) * self.x_coord(off)[:, a]

    def div_x(self) -> np.ndarray:
        """``(1 / sqrt det g) d_a (sqrt det g X^a)``."""
        total = sum(self.derivative(self.flux(a), self.zero, a) for a in range(self.n))
        return total / self.sqrt_det(self.zero)

    def scalar(self) -> np.ndarray:
        """``S = g^{bc} Ric_bc`` with ``Ric_bc = R^a_{cab}``."""
        z = self.zero
        chr_ = self.christoffel(z)  # [N, a, b, c]
        dchr = self.central("christoffel", z)  # [N, p, a, b, c] = d_p Gamma^c_ab
        t1 = np.trace(dchr, axis1=1, axis2=4)  # sum_a d_a Gamma^a_bc        -> [b, c]
        t2 = np.trace(dchr, axis1=2, axis2=4)  # d_b sum_a Gamma^a_ac        -> [b, c]
        tau = np.trace(chr_, axis1=1, axis2=3)  # sum_a Gamma^a_ae           -> [e]
        t3 = (chr_ @ tau[:, None, :, None])[..., 0]  # sum_e tau_e Gamma^e_bc
        M = np.transpose(chr_, (0, 3, 1, 2))  # [a, b, e] = Gamma^a_be
        K = np.swapaxes(chr_, -1, -2)  # [a, e, c] = Gamma^e_ac
        t4 = np.sum(M @ K, axis=1)  # sum_{a,e} Gamma^a_be Gamma^e_ac
        return np.sum(self.ginv(z) * (t1 - t2 + t3 - t4), axis=(-2, -1))

    def riemann_coord(self) -> np.ndarray:
        """``Rm[N, a, b, c, d] = <R(d_a, d_b) d_c, d_d>``."""
        z = self.zero
        chr_ = self.christoffel(z)  # [N, a, b, c] = Gamma^c_ab
        dchr = self.central("christoffel", z)  # [N, p, a, b, c]
        term = np.transpose(dchr, (0, 4, 3, 1, 2))  # [N, d, c, a, b] = d_a Gamma^d_bc
        quad = np.einsum("naed,nbce->ndcab", chr_, chr_)  # Gamma^d_ae Gamma^e_bc
        R_up = term - np.swapaxes(term, 3, 4) + quad - np.swapaxes(quad, 3, 4)  # R^d_{cab}
        return np.einsum("nde,necab->nabcd", self.g(z), R_up)


def _frame_riemann(Rm: np.ndarray, E: np.ndarray) -> np.ndarray:
    return np.einsum("nabcd,nai,nbj,nck,ndl->nijkl", Rm, E, E, E, E, optimize=True)


def psi_from_gamma(gamma: np.ndarray) -> np.ndarray:
    """``Psi = sum_{i<j, k != i,j} (Gamma_ii^k Gamma_jj^k - Gamma_ij^k Gamma_ji^k)``."""
    gamma = np.asarray(gamma)
    n = gamma.shape[-1]
    mask = _psi_mask(n)
    diag = np.einsum("...iik->...ik", gamma)
    first = np.einsum("...ik,...jk->...ijk", diag, diag)
    second = gamma * np.swapaxes(gamma, -3, -2)
    return np.sum((first - second) * mask, axis=(-3, -2, -1))


def _psi_mask(n: int) -> np.ndarray:
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    return ((i < j) & (k != i) & (k != j)).astype(float)


def index_claim_residual(gamma: np.ndarray) -> np.ndarray:
    """``sum (Gamma_ij^k - Gamma_ji^k) Gamma_kj^i - 2 sum Gamma_ij^k Gamma_ji^k`` over ``i<j, k != i,j``."""
    gamma = np.asarray(gamma)
    mask = _psi_mask(gamma.shape[-1])
    g_ji = np.swapaxes(gamma, -3, -2)  # [i, j, k] -> Gamma_ji^k
    g_kji = np.transpose(gamma, tuple(range(gamma.ndim - 3)) + (gamma.ndim - 1, gamma.ndim - 2, gamma.ndim - 3))
    # g_kji[i, j, k] = Gamma_kj^i
    lhs = np.sum((gamma - g_ji) * g_kji * mask, axis=(-3, -2, -1))
    rhs = 2.0 * np.sum(gamma * g_ji * mask, axis=(-3, -2, -1))
    return lhs - rhs


# ---------------------------------------------------------------------------
# batched drivers
# ---------------------------------------------------------------------------


def worker_count() -> int:
    """Thread count from ``FRAMEDIV_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("FRAMEDIV_WORKERS", "1")))
    except ValueError:
        return 1


def _map_chunks(fn, points: np.ndarray, chunk: int = CHUNK_SIZE) -> list:
    pieces = [points[i : i + chunk] for i in range(0, points.shape[0], chunk)] or [points]
    workers = worker_count()
    if workers > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, pieces))
    return [fn(p) for p in pieces]


def _as_batch(metric: ChartedMetric, point) -> tuple[np.ndarray, bool]:
    x = np.asarray(point, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != metric.dim:
        raise ValueError(f"points must have {metric.dim} coordinates")
    return x, single


@dataclass(frozen=True)
class FramePointData:
    """Orthonormal frame (and optionally its connection) at sample points."""

    point: np.ndarray
    frame: np.ndarray
    gamma: Optional[np.ndarray] = None
    rule: Optional[FrameRule] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class CurvatureSample:
    """Frame components ``<R(e_i, e_j) e_k, e_l>`` and scalar curvature."""

    point: np.ndarray
    riemann: np.ndarray
    scalar: np.ndarray


@dataclass(frozen=True)
class TangentVector:
    """A vector field sampled at points, in frame and coordinate components."""

    point: np.ndarray
    frame: np.ndarray
    coord: np.ndarray


@dataclass(frozen=True)
class IdentityTerms:
    """Every quantity entering ``div X = S/2 - Psi`` at a batch of points."""

    points: np.ndarray
    div_x: np.ndarray
    scalar: np.ndarray
    psi: np.ndarray
    gamma: np.ndarray
    x_frame: np.ndarray
    claim: np.ndarray
    antisymmetry: np.ndarray
    orthonormality: np.ndarray
    riemann: Optional[np.ndarray] = None

    @property
    def residual(self) -> np.ndarray:
        return np.abs(self.div_x - (0.5 * self.scalar - self.psi))


def _squeeze(arr, single):
    return arr[0] if single else arr


def _check_antisymmetry(gamma: np.ndarray) -> np.ndarray:
    """Raise if ``Gamma_ij^k + Gamma_ik^j`` exceeds the limit relative to ``1 + max |Gamma|``."""
    res = np.max(np.abs(gamma + np.swapaxes(gamma, -1, -2)), axis=(-3, -2, -1))
    res = res / (1.0 + np.max(np.abs(gamma), axis=(-3, -2, -1)))
    if np.any(res > ANTISYMMETRY_LIMIT):
        raise StepTooLarge(
            f"connection antisymmetry residual {np.max(res):.2e} exceeds {ANTISYMMETRY_LIMIT}; "
            "check the finite-difference step"
        )
    return res


def christoffel(metric: ChartedMetric, point) -> np.ndarray:
    """Coordinate Christoffel symbols ``Gamma^c_{ab}`` (index order ``[c, a, b]``)."""
    x, single = _as_batch(metric, point)
    out = np.concatenate(
        _map_chunks(lambda p: _Stencil(metric, p, gram_schmidt_rule, metric.h).christoffel((0,) * metric.dim), x)
    )
    return _squeeze(np.transpose(out, (0, 3, 1, 2)), single)


def orthonormal_frame(metric: ChartedMetric, point, frame_rule: Optional[FrameRule] = None) -> FramePointData:
    """Orthonormal frame at the points (Gram--Schmidt unless ``frame_rule`` is given)."""
    x, single = _as_batch(metric, point)
    rule = frame_rule or gram_schmidt_rule
    E = rule(x, metric.g(x))
    return FramePointData(point=_squeeze(x, single), frame=_squeeze(E, single), rule=rule)


def frame_connection(metric: ChartedMetric, point, frame_rule: Optional[FrameRule] = None) -> FramePointData:
    """Frame plus connection coefficients ``Gamma_ij^k``.

    Raises
    ------
    StepTooLarge
        If ``|Gamma_ij^k + Gamma_ik^j| / (1 + max |Gamma|)`` exceeds
        :data:`ANTISYMMETRY_LIMIT`.
    """
    x, single = _as_batch(metric, point)
    rule = frame_rule or gram_schmidt_rule

    def chunk(p):
        st = _Stencil(metric, p, rule, metric.h)
        return st.frame(st.zero), st.gamma(st.zero)

    parts = _map_chunks(chunk, x)
    E = np.concatenate([p[0] for p in parts])
    gamma = np.concatenate([p[1] for p in parts])
    _check_antisymmetry(gamma)
    return FramePointData(
        point=_squeeze(x, single), frame=_squeeze(E, single), gamma=_squeeze(gamma, single), rule=rule
    )


def field_X(metric: ChartedMetric, point, frame_rule: Optional[FrameRule] = None) -> TangentVector:
    """``X = sum_i nabla_{e_i} e_i`` in frame (``sum_i Gamma_ii^j``) and coordinate components."""
    data = frame_connection(metric, point, frame_rule)
    xf = np.einsum("...iij->...j", data.gamma)
    xc = np.einsum("...bj,...j->...b", data.frame, xf)
    return TangentVector(point=data.point, frame=xf, coord=xc)


def identity_terms(
    metric: ChartedMetric,
    points,
    frame_rule: Optional[FrameRule] = None,
    with_riemann: bool = False,
    check: bool = True,
) -> IdentityTerms:
    """Evaluate ``div X``, ``S``, ``Psi`` and consistency checks at points.

    ``div X`` uses the coordinate formula ``(1/sqrt det g) d_a(sqrt det g X^a)``,
    ``S`` the double frame trace of the Riemann tensor, and ``Psi`` the frame
    connection; none of them is derived from the others.
    """
    x, _ = _as_batch(metric, points)
    rule = frame_rule or gram_schmidt_rule

    def chunk(p):
        st = _Stencil(metric, p, rule, metric.h)
        z = st.zero
        E = st.frame(z)
        gamma = st.gamma(z)
        Rf = _frame_riemann(st.riemann_coord(), E) if with_riemann else None
        scalar = st.scalar()
        ortho = np.max(
            np.abs(np.swapaxes(E, -1, -2) @ st.g(z) @ E - np.eye(metric.dim)), axis=(-2, -1)
        )
        return {
            "div_x": st.div_x(),
            "scalar": scalar,
            "psi": psi_from_gamma(gamma),
            "gamma": gamma,
            "x_frame": np.einsum("niij->nj", gamma),
            "claim": np.abs(index_claim_residual(gamma)),
            "antisymmetry": np.max(np.abs(gamma + np.swapaxes(gamma, -1, -2)), axis=(-3, -2, -1)),
            "orthonormality": ortho,
            "riemann": Rf,
        }

    parts = _map_chunks(chunk, x)
    merged = {}
    for key in parts[0]:
        if parts[0][key] is None:
            merged[key] = None
        else:
            merged[key] = np.concatenate([p[key] for p in parts])
    if check:
        _check_antisymmetry(merged["gamma"])
    return IdentityTerms(points=x, **merged)


def div_X(metric: ChartedMetric, point, frame_rule: Optional[FrameRule] = None):
    """Divergence of ``X`` from the coordinate volume-element formula."""
    x, single = _as_batch(metric, point)
    rule = frame_rule or gram_schmidt_rule
    out = np.concatenate(_map_chunks(lambda p: _Stencil(metric, p, rule, metric.h).div_x(), x))
    return _squeeze(out, single)


def psi(metric: ChartedMetric, point, frame_rule: Optional[FrameRule] = None):
    """``Psi`` of the (Gram--Schmidt unless overridden) frame."""
    data = frame_connection(metric, point, frame_rule)
    return psi_from_gamma(data.gamma)


def scalar_curvature(metric: ChartedMetric, point, frame_rule: Optional[FrameRule] = None) -> CurvatureSample:
    """Frame Riemann components and scalar curvature ``S = sum_ij <R(e_i,e_j)e_j, e_i>``."""
    x, single = _as_batch(metric, point)
    rule = frame_rule or gram_schmidt_rule

    def chunk(p):
        st = _Stencil(metric, p, rule, metric.h)
        return _frame_riemann(st.riemann_coord(), st.frame(st.zero))

    Rf = np.concatenate(_map_chunks(chunk, x))
    S = np.einsum("nijji->n", Rf)
    return CurvatureSample(point=_squeeze(x, single), riemann=_squeeze(Rf, single), scalar=_squeeze(S, single))


def verify_div_identity(
    metric: ChartedMetric,
    sample_points,
    tolerance: float = 1e-5,
    frame_rule: Optional[FrameRule] = None,
) -> VerificationReport:
    """Residual ``|div X - (S/2 - Psi)|`` at each sample point."""
    terms = identity_terms(metric, sample_points, frame_rule)
    return VerificationReport(
        identity="div_identity",
        points=terms.points,
        residuals=terms.residual,
        tolerance=tolerance,
        metadata={
            "metric": metric.name,
            "frame": getattr(frame_rule, "__name__", "gram_schmidt") if frame_rule else "gram_schmidt",
            "derivative_mode": metric.derivative_mode,
            "h": metric.h,
            "max_claim_residual": float(np.max(terms.claim)),
            "max_antisymmetry": float(np.max(terms.antisymmetry)),
            "max_orthonormality": float(np.max(terms.orthonormality)),
        },
    )


# ---------------------------------------------------------------------------
# integrals over closed (periodic) boxes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosedIntegrals:
    """Riemannian integrals of the identity's terms over a periodic box."""

    half_scalar: float
    psi: float
    div_x: float
    volume: float
    abs_mass: float
    grid: tuple

    @property
    def identity_defect(self) -> float:
        """``|int (S/2 - Psi)| / Vol``."""
        return abs(self.half_scalar - self.psi) / self.volume

    @property
    def divergence_defect(self) -> float:
        """``|int div X| / Vol``."""
        return abs(self.div_x) / self.volume


def closed_integrals(
    metric: ChartedMetric, grid: Union[int, Sequence[int]] = 100, frame_rule: Optional[FrameRule] = None
) -> ClosedIntegrals:
    """Integrate ``S/2``, ``Psi`` and ``div X`` against ``sqrt(det g)`` on a periodic grid.

    On a periodic box the trapezoidal rule reduces to an equal-weight sum
    over the grid without duplicated endpoints.

    Raises
    ------
    NotClosed
        If some axis is not periodic.
    """
    if not metric.closed:
        raise NotClosed(f"metric {metric.name!r} has non-periodic axes")
    pts = metric.sample_grid(grid)
    shape = (grid,) * metric.dim if isinstance(grid, (int, np.integer)) else tuple(grid)
    cell = float(np.prod((metric.upper - metric.lower) / np.asarray(shape)))
    rule = frame_rule or gram_schmidt_rule

    def chunk(p):
        st = _Stencil(metric, p, rule, metric.h)
        z = st.zero
        vol = st.sqrt_det(z)
        S = st.scalar()
        ps = psi_from_gamma(st.gamma(z))
        dv = st.div_x()
        return np.array(
            [
                np.sum(0.5 * S * vol),
                np.sum(ps * vol),
                np.sum(dv * vol),
                np.sum(vol),
                np.sum((0.5 * np.abs(S) + np.abs(ps) + np.abs(dv)) * vol),
            ]
        )

    sums = np.sum(_map_chunks(chunk, pts), axis=0) * cell
    return ClosedIntegrals(
        half_scalar=float(sums[0]),
        psi=float(sums[1]),
        div_x=float(sums[2]),
        volume=float(sums[3]),
        abs_mass=float(sums[4]),
        grid=shape,
    )


def integrate_closed(metric: ChartedMetric, integrand: str, grid: Union[int, Sequence[int]] = 100) -> float:
    """Integral of one of ``"half_scalar"``, ``"psi"``, ``"div_x"`` or ``"volume"``."""
    res = closed_integrals(metric, grid)
    if integrand not in ("half_scalar", "psi", "div_x", "volume"):
        raise ValueError(f"unknown integrand {integrand!r}")
    return getattr(res, integrand)


# ---------------------------------------------------------------------------
# built-in metrics
# ---------------------------------------------------------------------------

TWO_PI = 2.0 * math.pi
POLAR_GUARD = 0.2


def flat_torus(n: int) -> ChartedMetric:
    """Euclidean metric on ``[0, 2 pi)^n`` with every axis periodic."""
    return ChartedMetric.from_expressions(
        ["1"] * n, [0.0] * n, [TWO_PI] * n, periodic=[True] * n, name=f"flat-torus-{n}"
    )


def round_sphere(n: int = 2) -> ChartedMetric:
    """Unit ``n``-sphere in hyperspherical angles; polar angles stay in ``[0.2, pi - 0.2]``.

    The metric uses fourth-order central differences.
    """
    diag = ["1"]
    factor = ""
    for i in range(1, n):
        factor = f"{factor} * sin(x{i})^2" if factor else f"sin(x{i})^2"
        diag.append(factor)
    lower = [POLAR_GUARD] * (n - 1) + [0.0]
    upper = [math.pi - POLAR_GUARD] * (n - 1) + [TWO_PI]
    periodic = [False] * (n - 1) + [True]
    metric = ChartedMetric.from_expressions(diag, lower, upper, periodic=periodic, name=f"round-s{n}")
    # the factors sin^2(x1) sin^2(x2) ... make second-order truncation at the guard
    # band reach 3e-6 (n = 2) and 9e-5 (n = 3); fourth order brings it below 1e-9
    return metric.with_step(metric.h, fd_order=4)


def stereographic_sphere() -> ChartedMetric:
    """Unit 2-sphere in stereographic coordinates on ``[-2, 2]^2``."""
    conf = "4 / (1 + x1^2 + x2^2)^2"
    return ChartedMetric.from_expressions([conf, conf], [-2.0, -2.0], [2.0, 2.0], name="round-s2-stereo")


def warped_torus3() -> ChartedMetric:
    """``dx1^2 + f(x1)^2 dx2^2 + h(x1)^2 dx3^2`` with ``f = 2 + sin``, ``h = 2 + cos``."""
    return ChartedMetric.from_expressions(
        ["1", "(2 + sin(x1))^2", "(2 + cos(x1))^2"],
        [0.0] * 3,
        [TWO_PI] * 3,
        periodic=[True] * 3,
        name="warped-torus-3",
    )


def torus_of_revolution(R: float = 2.0) -> ChartedMetric:
    """``du^2 + (R + cos u)^2 dv^2`` on the doubly periodic square."""
    if R <= 1.0:
        raise ValueError("need R > 1 for an embedded torus")
    return ChartedMetric.from_expressions(
        ["1", f"({float(R)!r} + cos(x1))^2"], [0.0, 0.0], [TWO_PI, TWO_PI], periodic=[True, True], name="torus-of-revolution"
    )


def hyperbolic_plane() -> ChartedMetric:
    """Upper half-plane ``(dx^2 + dy^2) / y^2`` on ``[-1, 1] x [0.5, 2]``."""
    return ChartedMetric.from_expressions(
        ["1 / x2^2", "1 / x2^2"], [-1.0, 0.5], [1.0, 2.0], name="hyperbolic-plane"
    )


def perturbed_flat_torus(seed: int, n: int = 3, amplitude: float = 0.1, modes: int = 3) -> ChartedMetric:
    """Random smooth perturbation ``delta_ij + amplitude * p_ij(x)`` of the flat torus.

    Each ``p_ij`` is a sum of ``modes`` Fourier modes with integer wave
    vectors in ``[-2, 2]^n`` and coefficients whose absolute values sum to
    one, so ``|p_ij| <= 1`` and the metric stays positive definite for
    ``amplitude * n < 1``.
    """
    if amplitude * n >= 1.0:
        raise ValueError("amplitude too large to guarantee positive definiteness")
    rng = np.random.default_rng(seed)
    comps = [["0"] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            weights = rng.uniform(0.2, 1.0, size=modes)
            weights /= weights.sum()
            weights *= rng.choice([-1.0, 1.0], size=modes)
            terms = []
            for w in weights:
                k = np.zeros(n, dtype=int)
                while not np.any(k):
                    k = rng.integers(-2, 3, size=n)
                phase = rng.uniform(0.0, TWO_PI)
                arg = " + ".join(f"{int(kk)}*x{a + 1}" for a, kk in enumerate(k) if kk)
                terms.append(f"{float(amplitude * w)!r} * cos({arg} + {float(phase)!r})")
            body = " + ".join(terms)
            comps[i][j] = f"1 + {body}" if i == j else body
    return ChartedMetric.from_expressions(
        comps, [0.0] * n, [TWO_PI] * n, periodic=[True] * n, name=f"perturbed-flat-{n}-{seed}"
    )


BUILTIN_METRICS: dict[str, Callable[[], ChartedMetric]] = {
    "flat-torus-2": lambda: flat_torus(2),
    "flat-torus-3": lambda: flat_torus(3),
    "flat-torus-4": lambda: flat_torus(4),
    "round-s2": lambda: round_sphere(2),
    "round-s3": lambda: round_sphere(3),
    "round-s2-stereo": stereographic_sphere,
    "warped-torus-3": warped_torus3,
    "torus-of-revolution": lambda: torus_of_revolution(2.0),
    "hyperbolic-plane": hyperbolic_plane,
}


def builtin_metric(name: str) -> ChartedMetric:
    """Look up a built-in metric; ``perturbed-flat-<seed>`` builds a random 3-torus metric."""
    if name in BUILTIN_METRICS:
        return BUILTIN_METRICS[name]()
    if name.startswith("perturbed-flat-"):
        tail = name[len("perturbed-flat-") :]
        parts = tail.split("-")
        try:
            if len(parts) == 1:
                return perturbed_flat_torus(int(parts[0]))
            return perturbed_flat_torus(int(parts[1]), n=int(parts[0]))
        except ValueError:
            pass
    known = ", ".join(sorted(BUILTIN_METRICS)) + ", perturbed-flat-<seed>"
    raise KeyError(f"unknown metric {name!r}; known: {known}")
