"""Verification suites run by the command-line driver.

Each suite turns a :class:`~framediv.config.SuiteConfig` into a stream of
:class:`~framediv.report.VerificationReport` objects handed to one
:class:`~framediv.report.ReportCollector`.  A report whose fixture is a
deliberate counterexample carries ``expect_pass=False``; a run succeeds when
every verdict matches its expectation.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional

import numpy as np

from . import codazzi as cz
from . import geometry as geo
from . import hypersurface as hs
from . import polyfamily as pf
from . import sympoly as sp
from .config import SuiteConfig
from .errors import ConfigError, DegenerateSpectrum, FrameDivError
from .report import ReportCollector, ReportSet, VerificationReport

# default tolerances per identity
TOLERANCES = {
    "div_identity": 1e-5,
    "div_x-gauss-curvature": 1e-6,
    "integrated-identity": 1e-6,
    "integrated-divergence": 1e-6,
    "partial-fraction": 1e-10,
    "sum-inverse-pprime": 1e-9,
    "v-closed-vs-sum": 1e-9,
    "u-closed-vs-sum": 1e-9,
    "L-negative": 0.0,
    "G-negative": 0.0,
    "exact-value": 1e-12,
    "codazzi": cz.CODAZZI_TOL,
    "offdiagonal-derivative": 1e-5,
    "diagonal-derivative": 1e-5,
    "diagonal-connection": 1e-5,
    "triple-sum": cz.TRIPLE_SUM_TOL,
    "lambda-gradient": 1e-5,
    "gamma-gradient": 1e-5,
    "x-gradient": 1e-5,
    "psi-quadratic": 1e-5,
    "root-residual": 1e-9,
    "endpoint-blowup": 1.0,
    "h_r-constancy": hs.ISOPARAMETRIC_RTOL,
    "shape-codazzi": 1e-6,
    "scalar-nonnegative": 1e-6,
    "gauss-vs-intrinsic": 1e-4,
    "unit-sphere": 1e-12,
}

#: Metrics of the pointwise identity sweep when no ``--metric`` is given.
DEFAULT_DIV_METRICS = (
    ["round-s2", "flat-torus-2", "flat-torus-3", "flat-torus-4", "warped-torus-3"]
    + [f"perturbed-flat-{s}" for s in range(20)]
)
#: Two-dimensional metrics of constant curvature ``K``: there ``Psi = 0`` and ``div X = K``.
CONSTANT_CURVATURE_2D = {"round-s2": 1.0, "round-s2-stereo": 1.0, "hyperbolic-plane": -1.0, "flat-torus-2": 0.0}
DEFAULT_GRID_BY_DIM = {1: (50,), 2: (50, 50), 3: (12, 12, 12), 4: (6, 6, 6, 6)}
DEFAULT_INTEGRATED = ("torus-of-revolution", "warped-torus-3")
DEFAULT_Q = "x^3-3x"
SWEEP_SIZES = tuple(range(2, 9))
DEFAULT_SAMPLES = 10_000
INTERIOR_SAMPLES = 64

#: Codazzi fixtures: name -> (gradient mode or None, expected Codazzi, expected vanishing triple sum).
CODAZZI_FIXTURES = {
    "strip-sigma-n": ("sigma_n_varies", True, True),
    "strip-sigma-nm1": ("sigma_nm1_varies", True, True),
    "constant-diag-3": (None, True, True),
    "swapped-linear-4": (None, False, True),
    "twisted-4": (None, False, False),
}
CODAZZI_GRID = {3: 4, 4: 4}


class _Emitter:
    """Applies tolerance overrides and forwards reports to the collector."""

    def __init__(self, config: SuiteConfig, collector: ReportCollector) -> None:
        self.config = config
        self.collector = collector

    def __call__(self, fixture: str, report, base: Optional[str] = None) -> None:
        reports = list(report) if isinstance(report, ReportSet) else [report]
        for r in reports:
            key = base or r.identity
            r.tolerance = self.config.tolerance_for(r.identity, TOLERANCES.get(key, r.tolerance))
            self.collector.add(fixture, r)


def _names(target, default: Iterable[str]) -> list:
    """Normalise a fixture target to a list of names or inline dicts."""
    if target is None:
        return list(default)
    if isinstance(target, dict):
        return [target]
    if isinstance(target, str):
        return [t.strip() for t in target.split(",") if t.strip()]
    if isinstance(target, (list, tuple)):
        return list(target)
    raise ConfigError(f"invalid target {target!r}")


def _inline(spec: dict, required: tuple) -> dict:
    missing = [k for k in required if k not in spec]
    if missing:
        raise ConfigError(f"inline fixture is missing {', '.join(missing)}")
    return spec


def resolve_metric(target) -> geo.ChartedMetric:
    """Built-in name or inline ``{components, lower, upper, ...}`` to a metric."""
    if isinstance(target, geo.ChartedMetric):
        return target
    if isinstance(target, dict):
        spec = _inline(target, ("components", "lower", "upper"))
        try:
            return geo.ChartedMetric.from_expressions(
                spec["components"],
                spec["lower"],
                spec["upper"],
                periodic=spec.get("periodic"),
                coordinates=spec.get("coordinates"),
                name=str(spec.get("name", "inline-metric")),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid inline metric: {exc}") from None
    try:
        return geo.builtin_metric(str(target))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def resolve_field(target) -> cz.SymmetricTensorField:
    """Built-in name or inline ``{metric, components}`` to a tensor field."""
    if isinstance(target, dict):
        spec = _inline(target, ("components", "metric"))
        metric = resolve_metric(spec["metric"])
        try:
            return cz.SymmetricTensorField.from_expressions(
                spec["components"], metric, coordinates=spec.get("coordinates"), name=str(spec.get("name", "inline-field"))
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid inline field: {exc}") from None
    try:
        return cz.builtin_field(str(target))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def resolve_immersion(target) -> tuple[hs.Immersion, bool]:
    """Built-in name or inline ``{components, lower, upper, ...}``; returns ``(immersion, expected isoparametric)``."""
    if isinstance(target, dict):
        spec = _inline(target, ("components", "lower", "upper"))
        try:
            imm = hs.Immersion.from_expressions(
                spec["components"],
                spec["lower"],
                spec["upper"],
                periodic=spec.get("periodic"),
                coordinates=spec.get("coordinates"),
                name=str(spec.get("name", "inline-immersion")),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid inline immersion: {exc}") from None
        return imm, bool(spec.get("isoparametric", True))
    name = str(target)
    try:
        return hs.builtin_immersion(name), hs.is_isoparametric_fixture(name)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def _grid_for(config: SuiteConfig, dim: int, default: Optional[tuple] = None) -> tuple:
    grid = config.grid
    if grid is None:
        return default if default is not None else DEFAULT_GRID_BY_DIM.get(dim, (4,) * dim)
    if len(grid) == 1:
        return grid * dim
    if len(grid) != dim:
        raise ConfigError(f"grid {'x'.join(map(str, grid))} does not match dimension {dim}")
    return grid


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def run_div_identity(config: SuiteConfig, emit: _Emitter) -> None:
    """Pointwise ``div X = S/2 - Psi`` on each metric's sample grid."""
    for target in _names(config.metric, DEFAULT_DIV_METRICS):
        metric = resolve_metric(target)
        pts = metric.sample_grid(_grid_for(config, metric.dim))
        terms = geo.identity_terms(metric, pts)
        emit(
            metric.name,
            VerificationReport(
                "div_identity",
                pts,
                terms.residual,
                TOLERANCES["div_identity"],
                {"metric": metric.name, "h": metric.h, "max_antisymmetry": float(np.max(terms.antisymmetry))},
            ),
        )
        if metric.name in CONSTANT_CURVATURE_2D:
            K = CONSTANT_CURVATURE_2D[metric.name]
            emit(
                metric.name,
                VerificationReport(
                    "div_x-gauss-curvature", pts, np.abs(terms.div_x - K), TOLERANCES["div_x-gauss-curvature"], {"K": K}
                ),
            )


def run_integrated_torus(config: SuiteConfig, emit: _Emitter) -> None:
    """``int (S/2 - Psi)`` and ``int div X`` over closed periodic boxes."""
    for target in _names(config.metric, DEFAULT_INTEGRATED):
        metric = resolve_metric(target)
        grid = _grid_for(config, metric.dim, (100,) * metric.dim)
        res = geo.closed_integrals(metric, grid)
        meta = {"grid": list(grid), "volume": res.volume, "half_scalar": res.half_scalar, "psi": res.psi}
        zero = np.zeros((1, metric.dim))
        emit(metric.name, VerificationReport("integrated-identity", zero, [res.identity_defect], 1e-6, dict(meta)))
        emit(metric.name, VerificationReport("integrated-divergence", zero, [res.divergence_defect], 1e-6, dict(meta)))


def _sign_residual(values: np.ndarray) -> np.ndarray:
    """0 where ``values < 0``; a strictly positive residual otherwise."""
    return np.where(values < 0.0, 0.0, np.maximum(values, np.finfo(float).tiny))


def run_sympoly_identities(config: SuiteConfig, emit: _Emitter) -> None:
    """Partial fractions, ``sum 1/P' = 0``, sign of ``L``/``G`` and weight closed forms on random spectra."""
    rng = np.random.default_rng(config.seed)
    samples = config.samples or DEFAULT_SAMPLES
    sizes = (config.n,) if config.n is not None else SWEEP_SIZES
    for n in sizes:
        if n < 2:
            raise ConfigError("sympoly-identities needs n >= 2")
        fixture = f"random-n{n}"
        lam = sp.random_spectra(rng, n, samples)
        meta = {"n": n, "samples": samples, "min_gap": 0.05}
        emit(fixture, VerificationReport("partial-fraction", lam, np.max(sp.verify_partial_fraction_identity(lam), axis=-1), 1e-10, dict(meta)))
        inv = 1.0 / sp.pprime_at_roots(lam)
        scaled = np.abs(np.sum(inv, axis=-1)) / np.sum(np.abs(inv), axis=-1)
        emit(fixture, VerificationReport("sum-inverse-pprime", lam, scaled, 1e-9, dict(meta)))
        emit(fixture, VerificationReport("v-closed-vs-sum", lam, np.max(sp.weight_disagreement(lam, "V"), axis=-1), 1e-9, dict(meta)))
        if n >= 3:
            L = sp.quad_L(lam)
            emit(fixture, VerificationReport("L-negative", lam, _sign_residual(np.max(L, axis=-1)), 0.0, {**meta, "max_L": float(np.max(L))}))
            emit(fixture, VerificationReport("u-closed-vs-sum", lam, np.max(sp.weight_disagreement(lam, "U"), axis=-1), 1e-9, dict(meta)))
        if n >= 4:  # for n = 3 the zero row of b makes every G(k) vanish identically
            zfix = f"same-sign-zero-n{n}"
            lz = sp.random_same_sign_with_zero(rng, n, samples)
            G = sp.quad_G(lz, zero_last=True)
            emit(zfix, VerificationReport("G-negative", lz, _sign_residual(np.max(G, axis=-1)), 0.0, {**meta, "max_G": float(np.max(G))}))
            emit(
                zfix,
                VerificationReport(
                    "u-closed-vs-sum", lz, np.max(sp.weight_disagreement(lz, "U", zero_last=True), axis=-1), 1e-9, dict(meta)
                ),
            )
    exact = [
        ("L(1) at (1,2,3)", np.array([1.0, 2.0, 3.0]), float(sp.quad_L([1.0, 2.0, 3.0], 0)), -0.5),
        ("G(4) at (1,2,3,0)", np.array([1.0, 2.0, 3.0, 0.0]), float(sp.quad_G([1.0, 2.0, 3.0, 0.0], zero_last=True)[3]), -0.5),
    ]
    for label, pts, value, expected in exact:
        emit("exact-values", VerificationReport("exact-value", pts[None, :], [abs(value - expected)], 1e-12, {"label": label, "value": value, "expected": expected}))


def run_polyfamily_scan(config: SuiteConfig, emit: _Emitter) -> None:
    """Roots along the admissible interval and ratio blow-up at its endpoints."""
    q = config.q or DEFAULT_Q
    try:
        family = pf.ShiftFamily.from_expression(q)
    except (ValueError, FrameDivError) as exc:
        raise ConfigError(f"invalid Q {q!r}: {exc}") from None
    lo, hi = family.t_range
    fixture = f"Q={q}"
    meta = {"Q": q, "t_range": [lo, hi]}
    if math.isfinite(lo) and math.isfinite(hi):
        t = np.linspace(lo, hi, INTERIOR_SAMPLES + 2)[1:-1]
        res = []
        for ti in t:
            roots = pf.roots_at(family, ti).values
            P = family.polynomial(ti)
            scale = 1.0 + np.max(np.abs(roots)) ** family.n
            res.append(float(np.max(np.abs(np.polyval(P.full_coeffs, roots)))) / scale)
        emit(fixture, VerificationReport("root-residual", t[:, None], res, 1e-9, dict(meta)))
    endpoints = ("lower", "upper") if config.endpoint in (None, "both") else (config.endpoint,)
    for endpoint in endpoints:
        try:
            path = pf.endpoint_blowup_scan(family, endpoint)
        except FrameDivError as exc:
            raise ConfigError(f"cannot scan the {endpoint} endpoint of {q!r}: {exc}") from None
        flagged = path.flagged if path.flagged is not None else np.zeros(family.n, dtype=bool)
        if np.any(flagged):
            # below 1 exactly when every merging ratio passed the divergence proxy
            residual = pf.BLOWUP_THRESHOLD / float(np.min(np.abs(path.ratios[-1][flagged])))
            if not path.passed:
                residual = max(residual, 2.0)
        else:
            residual = 0.0 if path.passed else 2.0
        emit(
            fixture,
            VerificationReport(
                f"endpoint-blowup-{endpoint}",
                np.array([[path.endpoint_t]]),
                [residual],
                1.0,
                {
                    **meta,
                    "endpoint": endpoint,
                    "verdict": path.verdict,
                    "ratios_at_smallest_offset": path.ratios[-1],
                    "flagged": flagged,
                    "smallest_offset": float(path.offsets[-1]),
                },
            ),
            base="endpoint-blowup",
        )


def run_codazzi_lemmas(config: SuiteConfig, emit: _Emitter) -> None:
    """Eigenframe identities on Codazzi fixtures; rejection of the non-Codazzi ones."""
    for target in _names(config.field, CODAZZI_FIXTURES):
        field = resolve_field(target)
        key = target if isinstance(target, str) else None
        mode, codazzi_expected, triple_expected = CODAZZI_FIXTURES.get(key, (None, True, True))
        pts = field.metric.sample_grid(_grid_for(config, field.dim, (CODAZZI_GRID.get(field.dim, 4),) * field.dim))
        cres = np.atleast_1d(cz.codazzi_residual(field, pts))
        emit(field.name, VerificationReport("codazzi", pts, cres, cz.CODAZZI_TOL, {"field": field.name}, expect_pass=codazzi_expected))
        try:
            eig = cz.eigenframe(field, pts)
        except DegenerateSpectrum:
            if codazzi_expected:
                raise
            continue  # eigenframe identities need a simple spectrum
        emit(field.name, cz.verify_eigen_derivative_identities(field, pts))
        tsum = np.abs(cz.triple_sum(eig.gamma))
        if codazzi_expected:
            emit(field.name, cz.verify_codazzi_eigen_identities(field, pts))
            if mode is not None:
                emit(field.name, cz.verify_eigenframe_gradient_formulas(field, pts, mode))
        else:
            emit(
                field.name,
                VerificationReport(
                    "triple-sum", pts, tsum, cz.TRIPLE_SUM_TOL, {"field": field.name, "codazzi_max": float(np.max(cres))}, expect_pass=triple_expected
                ),
            )


def run_hypersurface_isoparametric(config: SuiteConfig, emit: _Emitter) -> None:
    """``H_r`` constancy, shape-operator Codazzi, Gauss equation and scalar-curvature sign."""
    for target in _names(config.immersion, hs.BUILTIN_IMMERSIONS):
        imm, iso = resolve_immersion(target)
        grid = _grid_for(config, imm.n, (8,) * imm.n if imm.n <= 2 else (6,) * imm.n)
        pts = imm.sample_grid(grid)
        emit(imm.name, hs.isoparametric_check(imm, pts, expect_pass=iso, with_codazzi=False))
        sample = hs.shape_sample(imm, pts)
        S = np.atleast_1d(hs.gauss_scalar(sample))
        meta = {"immersion": imm.name}
        emit(imm.name, VerificationReport("unit-sphere", pts, imm.unit_defect(pts), 1e-12, dict(meta)))
        cres = np.atleast_1d(cz.codazzi_residual(hs.shape_field(imm), pts))
        emit(imm.name, VerificationReport("shape-codazzi", pts, cres, 1e-6, dict(meta)))
        gi = np.abs(np.atleast_1d(hs.intrinsic_scalar(imm, pts)) - S)
        emit(imm.name, VerificationReport("gauss-vs-intrinsic", pts, gi, 1e-4, dict(meta)))
        if iso:
            emit(imm.name, VerificationReport("scalar-nonnegative", pts, np.maximum(-S, 0.0), 1e-6, {**meta, "scalar_min": float(np.min(S))}))


SUITE_RUNNERS: dict[str, Callable[[SuiteConfig, _Emitter], None]] = {
    "div-identity": run_div_identity,
    "codazzi-lemmas": run_codazzi_lemmas,
    "sympoly-identities": run_sympoly_identities,
    "polyfamily-scan": run_polyfamily_scan,
    "hypersurface-isoparametric": run_hypersurface_isoparametric,
    "integrated-torus": run_integrated_torus,
}


def run_suite(config: SuiteConfig, collector: Optional[ReportCollector] = None) -> ReportCollector:
    """Run a suite; reports accumulate in (and are written by) the collector."""
    own = collector is None
    if own:
        collector = ReportCollector(config.out, config.suite, config.seed)
    try:
        SUITE_RUNNERS[config.suite](config, _Emitter(config, collector))
    finally:
        if own:
            collector.close()
    return collector

