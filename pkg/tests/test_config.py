from pathlib import Path

import pytest
import yaml
from hypothesis import given
import hypothesis.strategies as st

from framediv.config import SUITES, SuiteConfig, build_config, load_config_file, parse_grid
from framediv.errors import ConfigError
from framediv.suites import resolve_field, resolve_immersion, resolve_metric


@pytest.mark.parametrize(
    "spec, expected",
    [("50x50", (50, 50)), ("12", (12,)), (8, (8,)), ([3, 4, 5], (3, 4, 5)), (" 6 X 7 ", (6, 7)), (None, None)],
)
def test_parse_grid(spec, expected):
    assert parse_grid(spec) == expected


@pytest.mark.parametrize("spec", ["50x", "x50", "a", "0x5", 0, -3, True, [1, "b"], 2.5, "5x-1"])
def test_parse_grid_rejects(spec):
    with pytest.raises(ConfigError):
        parse_grid(spec)


@given(st.lists(st.integers(1, 500), min_size=1, max_size=5))
def test_parse_grid_roundtrip(sizes):
    assert parse_grid("x".join(map(str, sizes))) == tuple(sizes)


def write(tmp_path, data, name="cfg.yaml") -> Path:
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else yaml.safe_dump(data))
    return p


def test_precedence_file_over_flags_over_defaults(tmp_path):
    path = write(tmp_path, {"seed": 9, "grid": "10x10", "tolerances": {"a": 1e-3}})
    cfg = build_config(
        {"seed": 0, "tolerance": 1e-4},
        {"suite": "div-identity", "seed": 5, "grid": (20, 20), "metric": "round-s2", "tolerances": {"b": 2.0}},
        load_config_file(path),
    )
    assert cfg.seed == 9
    assert cfg.grid == (10, 10)
    assert cfg.metric == "round-s2"
    assert cfg.tolerance == 1e-4
    assert cfg.tolerances == {"a": 1e-3, "b": 2.0}
    assert cfg.tolerance_for("a", 1.0) == 1e-3
    assert cfg.tolerance_for("zzz", 1.0) == 1e-4


def test_none_flags_do_not_override():
    cfg = build_config({"seed": 3}, {"suite": "sympoly-identities", "seed": None})
    assert cfg.seed == 3


def test_full_schema(tmp_path):
    path = write(
        tmp_path,
        """
suite: hypersurface-isoparametric
seed: 4
grid: [5, 5]
tolerance: 1.0e-7
output: reports/
n: 4
samples: 10
target:
  immersion:
    name: my-torus
    components: ["cos(x1)/sqrt(2)", "sin(x1)/sqrt(2)", "cos(x2)/sqrt(2)", "sin(x2)/sqrt(2)"]
    lower: [0, 0]
    upper: [6.283185307179586, 6.283185307179586]
    periodic: [true, true]
  q: x^3-3x
  endpoint: both
""",
    )
    flat = load_config_file(path)
    assert flat["out"] == Path("reports")
    assert flat["q"] == "x^3-3x" and flat["endpoint"] == "both"
    cfg = build_config({}, {"suite": "hypersurface-isoparametric"}, flat)
    imm, iso = resolve_immersion(cfg.immersion)
    assert imm.n == 2 and imm.name == "my-torus" and iso


@pytest.mark.parametrize(
    "text",
    [
        "bogus: 1",
        "target: {colour: red}",
        "target: [1, 2]",
        "tolerance: tiny",
        "tolerances: 3",
        "grid: 5xx",
        "- a\n- b",
        "suite: [unclosed",
    ],
)
def test_bad_files(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config_file(write(tmp_path, text))


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "absent.yaml")
    assert load_config_file(write(tmp_path, "")) == {}


@pytest.mark.parametrize(
    "kwargs",
    [{"suite": "nope"}, {"suite": "polyfamily-scan", "endpoint": "middle"}, {"suite": "sympoly-identities", "n": 0},
     {"suite": "sympoly-identities", "seed": "x"}],
)
def test_suite_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SuiteConfig(**kwargs)


def test_build_config_errors():
    with pytest.raises(ConfigError):
        build_config({}, {"seed": 1})
    with pytest.raises(ConfigError):
        build_config({}, {"suite": "div-identity", "colour": "red"})


def test_resolvers():
    assert resolve_metric("round-s2").dim == 2
    m = resolve_metric({"components": ["1", "sin(x1)^2"], "lower": [0.2, 0], "upper": [2.9, 6.28], "periodic": [False, True]})
    assert m.dim == 2
    f = resolve_field({"metric": "flat-torus-3", "components": ["x1", "x2", "x3"]})
    assert f.dim == 3
    for bad in [lambda: resolve_metric("nope"), lambda: resolve_metric({"components": ["1"]}),
                lambda: resolve_field("nope"), lambda: resolve_immersion("nope"),
                lambda: resolve_metric({"components": ["1", "("], "lower": [0, 0], "upper": [1, 1]})]:
        with pytest.raises(ConfigError):
            bad()


def test_suites_are_listed():
    assert len(SUITES) == 6
