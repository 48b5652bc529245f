"""Numerical verification of frame-divergence and Codazzi identities.

Subpackages by topic:

* :mod:`framediv.sympoly` -- elementary symmetric functions and coefficient families of distinct spectra;
* :mod:`framediv.polyfamily` -- one-parameter shift families ``Q + t`` and their roots;
* :mod:`framediv.geometry` -- charted metrics, orthonormal frames, ``div X = S/2 - Psi``;
* :mod:`framediv.codazzi` -- symmetric tensor fields, eigenframes and Codazzi identities;
* :mod:`framediv.hypersurface` -- hypersurfaces of the unit sphere and isoparametric checks;
* :mod:`framediv.cli` -- the ``framediv`` command-line driver.
"""

from . import codazzi, geometry, hypersurface, polyfamily, sympoly
from .errors import FrameDivError
from .geometry import ChartedMetric, builtin_metric, div_X, identity_terms, psi, verify_div_identity
from .hypersurface import Immersion, clifford_torus, isoparametric_check, shape_sample
from .report import ReportSet, VerificationReport
from .sympoly import Spectrum, elementary_symmetric

__version__ = "0.1.0"

__all__ = [
    "ChartedMetric",
    "FrameDivError",
    "Immersion",
    "ReportSet",
    "Spectrum",
    "VerificationReport",
    "builtin_metric",
    "clifford_torus",
    "codazzi",
    "div_X",
    "elementary_symmetric",
    "geometry",
    "hypersurface",
    "identity_terms",
    "isoparametric_check",
    "polyfamily",
    "psi",
    "shape_sample",
    "sympoly",
    "verify_div_identity",
]
