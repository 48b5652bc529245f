"""One-parameter shift families ``P_t(x) = Q(x) + t``.

When every symmetric function but the last is frozen, the characteristic
polynomial moves in the family ``Q + t`` with ``Q(0) = 0``.  This module
locates the critical points of ``Q``, the admissible interval
``[-M, -m]`` of shifts with an all-real spectrum (``M`` the smallest local
maximum value, ``m`` the largest local minimum value), tracks roots along
``t`` and scans the ratios ``P''(lambda_i) / P'(lambda_i)^2`` as ``t``
approaches a threshold where two roots merge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

import numpy as np

from .errors import (
    ComplexRootsDetected,
    DegenerateCriticalPoints,
    EmptyInterval,
    NotAThresholdEndpoint,
)
from .expr import polynomial_coefficients
from .sympoly import (
    MonicPolynomial,
    Spectrum,
    SpectrumLike,
    _values,
    companion_roots,
    pdoubleprime_at_roots,
    poly_eval_suite,
    pprime_at_roots,
)

#: Roots closer than ``CLUSTER_RTOL * (1 + max|root|)`` are merged.
CLUSTER_RTOL = 1e-6
#: Imaginary parts below ``CLUSTER_RTOL * (1 + max|root|)`` are discarded.
IMAG_RTOL = 1e-6
NEWTON_STEPS = 2
#: Divergence proxy: ``|ratio|`` must exceed this at the smallest offset.
BLOWUP_THRESHOLD = 1e3

Endpoint = Literal["lower", "upper"]


@dataclass(frozen=True)
class CriticalProfile:
    """Critical points of ``Q`` with their values and max/min classes."""

    xi: np.ndarray
    q_values: np.ndarray
    classes: tuple[str, ...]
    M_lower: Optional[float]
    m_upper: Optional[float]


@dataclass(frozen=True)
class RootSet:
    """Real roots of ``Q + t`` with multiplicities.

    ``values`` lists every root (repeated by multiplicity) in ascending
    order; ``distinct`` and ``multiplicity`` describe the clusters.
    """

    t: float
    values: np.ndarray
    distinct: np.ndarray
    multiplicity: np.ndarray

    @property
    def spectrum(self) -> Spectrum:
        return Spectrum(self.values)

    @property
    def n_double(self) -> int:
        return int(np.sum(self.multiplicity == 2))

    @property
    def simple(self) -> bool:
        return bool(np.all(self.multiplicity == 1))


@dataclass(frozen=True)
class RootPath:
    """Roots and ratios ``P''/P'^2`` sampled along a path of shifts.

    For endpoint scans ``offsets`` holds the distances ``delta`` to the
    endpoint (decreasing), ``t_samples`` the corresponding shifts,
    ``flagged`` marks the root positions that merge at the endpoint and
    ``expected_sign`` the sign of their divergence.
    """

    t_samples: np.ndarray
    roots: np.ndarray
    ratios: np.ndarray
    endpoint: Optional[str] = None
    endpoint_t: Optional[float] = None
    is_threshold: bool = False
    offsets: Optional[np.ndarray] = None
    flagged: Optional[np.ndarray] = None
    expected_sign: int = 0
    diverges: Optional[np.ndarray] = field(default=None)
    bounded_variation: Optional[np.ndarray] = field(default=None)

    @property
    def verdict(self) -> str:
        """``"+inf"``/``"-inf"`` when every flagged ratio diverges, else ``"bounded"`` or ``"inconclusive"``."""
        if self.flagged is None or not np.any(self.flagged):
            return "bounded"
        if np.all(self.diverges[self.flagged]):
            return "+inf" if self.expected_sign > 0 else "-inf"
        return "inconclusive"

    @property
    def passed(self) -> bool:
        """Flagged ratios diverge with the expected sign and the others stay put."""
        if self.flagged is None:
            return True
        others = ~self.flagged
        ok_others = bool(np.all(self.bounded_variation[others] < 0.1))
        if not np.any(self.flagged):
            return ok_others
        return bool(np.all(self.diverges[self.flagged])) and ok_others


@dataclass(frozen=True)
class ShiftFamily:
    """The family ``Q(x) + t`` for ``t`` in ``t_range``.

    ``Q`` must satisfy ``Q(0) = 0``.  When ``t_range`` is omitted the
    admissible interval of ``Q`` is used.
    """

    Q: MonicPolynomial
    t_range: tuple[float, float] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.Q.sigma[-1] != 0.0:
            raise ValueError("Q must have zero constant term")
        if self.t_range is None:
            object.__setattr__(self, "t_range", admissible_interval(critical_profile(self.Q)))
        a, b = (float(v) for v in self.t_range)
        if not a <= b:
            raise ValueError(f"empty t_range {self.t_range}")
        object.__setattr__(self, "t_range", (a, b))

    @classmethod
    def from_expression(
        cls, text: str, var: str = "x", t_range: Optional[tuple[float, float]] = None
    ) -> "ShiftFamily":
        """Family for ``Q`` given as text, e.g. ``"x^3-3x"``; ``Q`` must be monic."""
        coeffs = polynomial_coefficients(text, var)
        if coeffs.size < 2 or coeffs[-1] != 1.0:
            raise ValueError(f"Q = {text!r} is not a monic polynomial of degree >= 1")
        return cls(MonicPolynomial.from_coefficients(coeffs[::-1]), t_range)

    @classmethod
    def from_spectrum(cls, spec: SpectrumLike) -> tuple["ShiftFamily", float]:
        """The family through ``P = prod (x - lambda_i)`` and the shift ``t`` with ``P = Q + t``."""
        P = MonicPolynomial.from_roots(_values(spec))
        t0 = float(P.full_coeffs[-1])
        Q = P.shifted(-t0)
        return cls(Q), t0

    @property
    def n(self) -> int:
        return self.Q.n

    def polynomial(self, t: float) -> MonicPolynomial:
        return self.Q.shifted(t)


# ---------------------------------------------------------------------------
# roots
# ---------------------------------------------------------------------------


def _polish(P: MonicPolynomial, x: np.ndarray, guard: np.ndarray) -> np.ndarray:
    """A few Newton steps, each limited to a fraction of the distance to the neighbours."""
    x = x.copy()
    for _ in range(NEWTON_STEPS):
        p, dp, _ = poly_eval_suite(P, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dp != 0.0, p / dp, 0.0)
        ok = np.abs(step) < 0.25 * guard
        x = np.where(ok, x - step, x)
    return x


def _real_roots(coeffs: np.ndarray, error_cls, what: str) -> np.ndarray:
    z = companion_roots(coeffs)
    scale = 1.0 + np.max(np.abs(z))
    if np.max(np.abs(z.imag)) > IMAG_RTOL * scale:
        raise error_cls(f"{what} has non-real roots (max |imag| = {np.max(np.abs(z.imag)):.3e})")
    return np.sort(z.real)


def _neighbour_gaps(x: np.ndarray) -> np.ndarray:
    if x.size < 2:
        return np.full(x.shape, 1.0 + np.abs(x))
    d = np.diff(x)
    left = np.concatenate([[np.inf], d])
    right = np.concatenate([d, [np.inf]])
    return np.minimum(left, right)


def critical_profile(Q: MonicPolynomial) -> CriticalProfile:
    """Critical points of ``Q``, their values and classes.

    Roots of ``Q'`` come from a companion-matrix eigensolve followed by Newton
    polishing; ``Q''`` decides between local maximum and minimum.

    Raises
    ------
    DegenerateCriticalPoints
        If ``Q'`` has a non-real or repeated root.
    """
    n = Q.n
    if n < 2:
        raise DegenerateCriticalPoints("Q needs degree >= 2 to have critical points")
    dq = Q.derivative_coeffs() / n
    dQ = MonicPolynomial.from_coefficients(dq)
    xi = _real_roots(dq, DegenerateCriticalPoints, "Q'")
    gaps = _neighbour_gaps(xi)
    scale = 1.0 + np.max(np.abs(xi))
    if xi.size > 1 and np.min(gaps) < CLUSTER_RTOL * scale:
        raise DegenerateCriticalPoints("Q' has a repeated root")
    xi = _polish(dQ, xi, gaps)
    q, _, q2 = poly_eval_suite(Q, xi)
    if np.any(q2 == 0.0):
        raise DegenerateCriticalPoints("Q'' vanishes at a critical point")
    classes = tuple("max" if v < 0 else "min" for v in q2)
    maxima = [v for v, c in zip(q, classes) if c == "max"]
    minima = [v for v, c in zip(q, classes) if c == "min"]
    return CriticalProfile(
        xi=xi,
        q_values=q,
        classes=classes,
        M_lower=float(min(maxima)) if maxima else None,
        m_upper=float(max(minima)) if minima else None,
    )


def admissible_interval(profile: CriticalProfile) -> tuple[float, float]:
    """``[-M, -m]``: the shifts ``t`` for which ``Q + t`` has only real roots.

    A missing maximum (minimum) leaves the lower (upper) end unbounded.
    """
    M, m = profile.M_lower, profile.m_upper
    if M is not None and m is not None and M <= m:
        raise EmptyInterval(f"smallest local max {M} does not exceed largest local min {m}")
    lo = -M + 0.0 if M is not None else -math.inf
    hi = -m + 0.0 if m is not None else math.inf
    return (lo, hi)


def _as_polynomial(family: Union[ShiftFamily, MonicPolynomial], t: float) -> MonicPolynomial:
    if isinstance(family, ShiftFamily):
        return family.polynomial(t)
    return family.shifted(t)


def roots_at(family: Union[ShiftFamily, MonicPolynomial], t: float) -> RootSet:
    """All real roots of ``Q + t``, clustered into multiplicities.

    Raises
    ------
    ComplexRootsDetected
        If some root has an imaginary part above tolerance.
    """
    P = _as_polynomial(family, t)
    x = _real_roots(P.full_coeffs, ComplexRootsDetected, f"Q + {t}")
    tol = CLUSTER_RTOL * (1.0 + np.max(np.abs(x)))
    # group consecutive roots closer than the cluster tolerance
    starts = np.concatenate([[True], np.diff(x) >= tol])
    labels = np.cumsum(starts) - 1
    distinct = np.array([x[labels == g].mean() for g in range(labels[-1] + 1)])
    mult = np.bincount(labels)
    simple = mult == 1
    if np.any(simple):
        gaps = _neighbour_gaps(distinct)
        polished = _polish(P, distinct, gaps)
        distinct = np.where(simple, polished, distinct)
    return RootSet(
        t=float(t),
        values=np.repeat(distinct, mult),
        distinct=distinct,
        multiplicity=mult,
    )


def ratios_at(roots: SpectrumLike) -> np.ndarray:
    """``P''(lambda_i) / P'(lambda_i)^2`` at distinct roots, in product form."""
    lam = _values(roots)
    return pdoubleprime_at_roots(lam) / pprime_at_roots(lam) ** 2


def track_roots(family: ShiftFamily, t_grid: Sequence[float]) -> RootPath:
    """Roots and ratios along ``t_grid`` (every sample must have simple roots)."""
    t = np.asarray(t_grid, dtype=float)
    roots = np.array([roots_at(family, ti).values for ti in t])
    return RootPath(t_samples=t, roots=roots, ratios=ratios_at(roots))


def endpoint_blowup_scan(
    family: ShiftFamily,
    endpoint: Endpoint,
    offsets: Optional[Sequence[float]] = None,
    strict: bool = True,
) -> RootPath:
    """Scan ``P''/P'^2`` as ``t`` approaches an endpoint of ``family.t_range``.

    At the lower threshold ``-M`` the roots merging at a local maximum have
    ratios tending to ``-inf``; at the upper threshold ``-m`` the pair merging
    at a local minimum tends to ``+inf``.  A flagged ratio counts as divergent
    when its sign is right, ``|ratio|`` exceeds :data:`BLOWUP_THRESHOLD` at
    the smallest offset, and ``|ratio|`` grows monotonically over the last
    three decades of offsets.  The other ratios are summarised by their
    relative variation over the last decade.

    Parameters
    ----------
    offsets : sequence of float, optional
        Positive, decreasing distances to the endpoint; default
        ``logspace(-2, -6, 13)``.
    strict : bool
        Raise :class:`NotAThresholdEndpoint` for an endpoint strictly inside
        the admissible interval; otherwise scan it and report boundedness.
    """
    if endpoint not in ("lower", "upper"):
        raise ValueError(f"endpoint must be 'lower' or 'upper', got {endpoint!r}")
    deltas = np.logspace(-2, -6, 13) if offsets is None else np.asarray(offsets, dtype=float)
    if np.any(deltas <= 0) or np.any(np.diff(deltas) >= 0):
        raise ValueError("offsets must be positive and strictly decreasing")
    lo, hi = admissible_interval(critical_profile(family.Q))
    a, b = family.t_range
    te = a if endpoint == "lower" else b
    threshold = lo if endpoint == "lower" else hi
    if not math.isfinite(te):
        raise NotAThresholdEndpoint(f"the {endpoint} endpoint is unbounded")
    is_threshold = math.isfinite(threshold) and abs(te - threshold) <= 1e-9 * (1.0 + abs(threshold))
    if not is_threshold and strict:
        raise NotAThresholdEndpoint(
            f"{endpoint} endpoint t={te} is not the threshold {threshold} of the admissible interval"
        )

    t = te + deltas if endpoint == "lower" else te - deltas
    roots = np.array([roots_at(family, ti).values for ti in t])
    ratios = ratios_at(roots)
    n = family.n

    if is_threshold:
        at_end = roots_at(family, threshold)
        flagged = np.repeat(at_end.multiplicity > 1, at_end.multiplicity)
    else:
        flagged = np.zeros(n, dtype=bool)
    sign = -1 if endpoint == "lower" else 1

    last3 = deltas <= deltas[-1] * 1e3 * (1 + 1e-9)
    mags = np.abs(ratios[last3])
    monotone = np.all(np.diff(mags, axis=0) > 0, axis=0)
    right_sign = np.all(np.sign(ratios[last3]) == sign, axis=0)
    big = np.abs(ratios[-1]) > BLOWUP_THRESHOLD
    diverges = monotone & right_sign & big

    last1 = deltas <= deltas[-1] * 10 * (1 + 1e-9)
    ref = ratios[-1]
    variation = np.max(np.abs(ratios[last1] - ref), axis=0) / (np.abs(ref) + 1e-12)

    return RootPath(
        t_samples=t,
        roots=roots,
        ratios=ratios,
        endpoint=endpoint,
        endpoint_t=float(te),
        is_threshold=bool(is_threshold),
        offsets=deltas,
        flagged=flagged,
        expected_sign=sign,
        diverges=diverges,
        bounded_variation=variation,
    )
