import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lssboost.config import ConfigError, ModelConfig, load_config, parse_factor
from lssboost.data import CATEGORICAL, CONTINUOUS, DataError, Dataset, ingest
from lssboost.simulate import SimulationError, simulate


def test_hint_makes_numeric_column_categorical(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,g\n1.5,1\n2.5,2\n0.5,1\n")
    d = ingest(p, {"g": CATEGORICAL})
    assert d.types["g"] == CATEGORICAL
    assert d.levels("g") == ("1", "2")
    assert d.types["y"] == CONTINUOUS


def test_missing_rows_dropped(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,x,unused\n1,2,\n3,NA,1\n5,6,7\n")
    d = ingest(p, used_columns=["y", "x"])
    assert d.n == 2 and d.n_dropped == 1


def test_ingest_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,x\n1,2\n3\n")
    with pytest.raises(DataError):
        ingest(p)
    p.write_text("y,x\n1,2\n")
    with pytest.raises(DataError):
        ingest(p, used_columns=["z"])
    with pytest.raises(DataError):
        ingest(tmp_path / "missing.csv")


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.integers(1, 40),
              elements=st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False)))
def test_csv_roundtrip_bitwise(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    d = Dataset({"x": x, "g": np.array(["a"] * x.size, dtype=object)},
                {"x": CONTINUOUS, "g": CATEGORICAL})
    d.to_csv(p)
    back = ingest(p, {"g": CATEGORICAL})
    assert np.array_equal(back["x"], x)
    assert back.fingerprint() == d.fingerprint()


def test_fingerprint_sensitive_to_values():
    a = Dataset.from_dict({"x": np.array([1.0, 2.0])})
    b = Dataset.from_dict({"x": np.array([1.0, 2.0 + 1e-15])})
    assert a.fingerprint() != b.fingerprint()


def test_parse_factor():
    assert parse_factor("1/600") == pytest.approx(1 / 600)
    assert parse_factor(2) == 2.0
    with pytest.raises(ConfigError):
        parse_factor("0")
    with pytest.raises(ConfigError):
        parse_factor("abc")


def test_config_defaults_and_terms(tmp_path):
    (tmp_path / "g.csv").write_text("a,b\nb,c\n")
    (tmp_path / "c.yaml").write_text(
        "family: gaussian\nresponse: y\nrescale: 1/600\nadjacency: g.csv\n"
        "formula:\n  - {kind: pspline, covariate: x}\n  - {kind: mrf, covariate: r}\n")
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.rescale == pytest.approx(1 / 600)
    c = cfg.boost_control()
    assert c.mstop == 100 and c.nu == 0.1
    terms = cfg.formulas()
    assert terms[1].graph.labels == ("a", "b", "c")
    assert cfg.used_columns() == ["y", "x", "r"]


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"family": "gaussian", "response": "y", "formula": [], "extra": 1})
    cfg = ModelConfig.from_dict({"family": "gaussian", "response": "y",
                                 "formula": [{"kind": "mrf", "covariate": "r"}]})
    with pytest.raises(ConfigError):
        cfg.formulas()


SPEC = {"family": "gaussian",
        "covariates": {"x1": {"dist": "uniform", "low": -1, "high": 1},
                       "x2": {"dist": "uniform", "low": -1, "high": 1}},
        "eta": {"mu": {"linear": {"x1": 2.0}}, "sigma": {"linear": {"x2": 0.5}}}}


def test_simulate_moments_match_truth():
    d, truth = simulate(SPEC, 20000, seed=1)
    assert np.allclose(truth["mu"], 2 * d["x1"])
    assert np.allclose(truth["sigma"], np.exp(0.5 * d["x2"]))
    z = (d["y"] - truth["mu"]) / truth["sigma"]
    assert abs(z.mean()) < 4 / np.sqrt(d.n)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / d.n)


def test_simulate_deterministic_bytes(tmp_path):
    simulate(SPEC, 50, seed=7)[0].to_csv(tmp_path / "a.csv")
    simulate(SPEC, 50, seed=7)[0].to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_simulate_rejects_bad_input():
    with pytest.raises(SimulationError):
        simulate(SPEC, 0)
    with pytest.raises(SimulationError):
        simulate({"family": "gaussian", "eta": {"mu": {}}}, 10)
    with pytest.raises(SimulationError):
        simulate({"family": "gaussian", "eta": {"mu": {"linear": {"q": 1}}, "sigma": {}}}, 10)


def test_simulate_smooth_input_transform():
    spec = {"family": "gaussian", "covariates": SPEC["covariates"],
            "eta": {"mu": {"smooth": {"x1": {"fun": "tanh", "scale": 3, "center": 0.5,
                                             "width": 0.2}}}, "sigma": {}}}
    d, truth = simulate(spec, 100, seed=2)
    assert np.allclose(truth["mu"], 3 * np.tanh((d["x1"] - 0.5) / 0.2))
    spec["eta"]["mu"]["smooth"]["x1"]["width"] = 0
    with pytest.raises(SimulationError):
        simulate(spec, 10)
