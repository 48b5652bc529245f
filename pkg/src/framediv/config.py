"""Suite configuration: defaults, command-line flags and YAML files.

Precedence is ``defaults < flags < config file``.  A configuration file is a
YAML mapping; every key is optional::

    suite: div-identity          # name of the suite to run
    seed: 7                      # RNG seed (recorded in every report row)
    grid: 50x50                  # or an integer, or a list [50, 50]
    tolerance: 1.0e-5            # overrides every identity's tolerance
    tolerances:                  # per-identity overrides (win over ``tolerance``)
      div_identity: 1.0e-5
    output: reports/             # directory for report.jsonl and summary.csv
    n: 5                         # spectrum size (sympoly-identities)
    samples: 10000               # spectra per size (sympoly-identities)
    target:
      metric: round-s2           # built-in name, list of names, or an inline metric
      field: strip-sigma-n       # codazzi-lemmas
      immersion: clifford-1-1    # hypersurface-isoparametric
      q: "x^3-3x"                # polyfamily-scan
      endpoint: upper            # polyfamily-scan: lower | upper | both

Inline fixtures use the expression grammar::

    target:
      metric:
        name: my-sphere
        components: [["1", "0"], ["0", "sin(x1)^2"]]   # or a diagonal list
        lower: [0.2, 0.0]
        upper: [2.94, 6.283185307179586]
        periodic: [false, true]
      immersion:
        name: my-torus
        components: ["cos(x1)/sqrt(2)", "sin(x1)/sqrt(2)", "cos(x2)/sqrt(2)", "sin(x2)/sqrt(2)"]
        lower: [0, 0]
        upper: [6.283185307179586, 6.283185307179586]
        periodic: [true, true]
      field:
        name: my-field
        metric: flat-torus-3     # or an inline metric
        components: ["x1", "x2", "x3"]
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .errors import ConfigError

SUITES = (
    "div-identity",
    "codazzi-lemmas",
    "sympoly-identities",
    "polyfamily-scan",
    "hypersurface-isoparametric",
    "integrated-torus",
)

Target = Union[str, list, dict, None]


@dataclass
class SuiteConfig:
    """Everything a suite run needs.

    Attributes
    ----------
    suite : str
        One of :data:`SUITES`.
    seed : int
        RNG seed, recorded in every output row.
    grid : tuple of int, optional
        Sample grid; a single entry is broadcast over all axes.
    tolerance : float, optional
        Overrides the tolerance of every identity.
    tolerances : dict
        Per-identity overrides.
    out : Path, optional
        Report directory.
    n, samples : int, optional
        Sweep controls for ``sympoly-identities``.
    metric, field, immersion : str, list or dict, optional
        Fixture names (built-in, comma-separated or list) or inline specifications.
    q : str, optional
        Polynomial ``Q`` for ``polyfamily-scan``.
    endpoint : str, optional
        ``"lower"``, ``"upper"`` or ``"both"``.
    """

    suite: str
    seed: int = 0
    grid: Optional[tuple] = None
    tolerance: Optional[float] = None
    tolerances: dict = field(default_factory=dict)
    out: Optional[Path] = None
    n: Optional[int] = None
    samples: Optional[int] = None
    metric: Target = None
    field: Target = None
    immersion: Target = None
    q: Optional[str] = None
    endpoint: Optional[str] = None

    def __post_init__(self) -> None:
        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}; known: {', '.join(SUITES)}")
        if self.endpoint is not None and self.endpoint not in ("lower", "upper", "both"):
            raise ConfigError(f"endpoint must be lower, upper or both, got {self.endpoint!r}")
        for name in ("n", "samples"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")

    def tolerance_for(self, identity: str, default: float) -> float:
        """Tolerance after applying the overrides."""
        if identity in self.tolerances:
            return float(self.tolerances[identity])
        if self.tolerance is not None:
            return float(self.tolerance)
        return default


def parse_grid(spec: Any) -> Optional[tuple]:
    """``"50x50"``, ``50``, ``"50"`` or ``[50, 50]`` to a tuple of positive ints."""
    if spec is None:
        return None
    if isinstance(spec, bool):
        raise ConfigError(f"invalid grid {spec!r}")
    if isinstance(spec, int):
        parts = [spec]
    elif isinstance(spec, str):
        if not re.fullmatch(r"\s*\d+(\s*[xX]\s*\d+)*\s*", spec):
            raise ConfigError(f"invalid grid {spec!r}; expected e.g. 50x50")
        parts = [int(p) for p in re.split(r"[xX]", spec)]
    elif isinstance(spec, (list, tuple)):
        try:
            parts = [int(p) for p in spec]
        except (TypeError, ValueError):
            raise ConfigError(f"invalid grid {spec!r}") from None
    else:
        raise ConfigError(f"invalid grid {spec!r}")
    if not parts or any(p < 1 for p in parts):
        raise ConfigError(f"grid sizes must be positive, got {spec!r}")
    return tuple(parts)


def _float(value: Any, what: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {value!r}") from None


def load_config_file(path: Union[str, Path]) -> dict:
    """Read a YAML configuration into the flat keyword form used by :func:`build_config`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    known = {"suite", "seed", "grid", "tolerance", "tolerances", "output", "out", "n", "samples", "target"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    flat: dict = {}
    for key in ("suite", "seed", "n", "samples"):
        if key in data:
            flat[key] = data[key]
    if "grid" in data:
        flat["grid"] = parse_grid(data["grid"])
    if "tolerance" in data:
        flat["tolerance"] = _float(data["tolerance"], "tolerance")
    if "tolerances" in data:
        tols = data["tolerances"]
        if not isinstance(tols, dict):
            raise ConfigError("tolerances must be a mapping of identity -> number")
        flat["tolerances"] = {str(k): _float(v, f"tolerance of {k}") for k, v in tols.items()}
    out = data.get("output", data.get("out"))
    if isinstance(out, dict):
        out = out.get("dir")
    if out is not None:
        flat["out"] = Path(str(out))
    target = data.get("target", {}) or {}
    if not isinstance(target, dict):
        raise ConfigError("target must be a mapping")
    bad = set(target) - {"metric", "field", "immersion", "q", "endpoint"}
    if bad:
        raise ConfigError(f"unknown target keys: {', '.join(sorted(bad))}")
    for key, value in target.items():
        flat[key] = str(value) if key in ("q", "endpoint") else value
    return flat


def build_config(defaults: Optional[dict] = None, flags: Optional[dict] = None, file_values: Optional[dict] = None) -> SuiteConfig:
    """Merge the three layers (later layers win) into a :class:`SuiteConfig`.

    ``None`` values in ``flags`` mean "not given" and do not override.
    """
    merged: dict = {}
    for layer in (defaults or {}, flags or {}, file_values or {}):
        for key, value in layer.items():
            if value is None:
                continue
            if key == "tolerances":
                merged["tolerances"] = {**merged.get("tolerances", {}), **value}
            else:
                merged[key] = value
    if "suite" not in merged:
        raise ConfigError("no suite given")
    names = {f.name for f in dataclasses.fields(SuiteConfig)}
    unknown = set(merged) - names
    if unknown:
        raise ConfigError(f"unknown settings: {', '.join(sorted(unknown))}")
    return SuiteConfig(**merged)
