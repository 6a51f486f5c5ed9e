"""Synthetic data with known distribution parameters per observation.

A generator spec (YAML or dict) lists covariates and, per distribution
parameter, the additive predictor on the link scale::

    family: gaussian
    covariates:
      x1: {dist: uniform, low: -1, high: 1}
      x2: {dist: normal}
      g:  {dist: categorical, levels: [a, b, c]}
    eta:
      mu:    {intercept: 0, linear: {x1: 2}, smooth: {x2: sin}}
      # smooth terms may rescale input and output: scale * fun((x - center) / width)
      sigma: {intercept: 0, linear: {x2: 0.5}, categorical: {g: {a: 0.2}}}
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .data import CATEGORICAL, CONTINUOUS, Dataset
from .families import get_family

SMOOTH = {
    "sin": np.sin,
    "cos": np.cos,
    "square": np.square,
    "cube": lambda x: x ** 3,
    "tanh": np.tanh,
}


class SimulationError(ValueError):
    pass


def load_spec(path) -> dict:
    return yaml.safe_load(Path(path).read_text(encoding="utf-8"))


def _covariate(rng, name, c, n):
    dist = c.get("dist", "normal")
    if dist == "uniform":
        return rng.uniform(c.get("low", 0.0), c.get("high", 1.0), n), CONTINUOUS
    if dist == "normal":
        return rng.normal(c.get("mean", 0.0), c.get("sd", 1.0), n), CONTINUOUS
    if dist == "categorical":
        levels = [str(v) for v in c.get("levels", [])]
        if not levels:
            raise SimulationError(f"categorical covariate {name!r} needs levels")
        return np.array(levels, dtype=object)[rng.integers(len(levels), size=n)], CATEGORICAL
    raise SimulationError(f"covariate {name!r}: unknown dist {dist!r}")


def _predictor(spec: dict, cols: dict, n: int, pname: str) -> np.ndarray:
    eta = np.full(n, float(spec.get("intercept", 0.0)))
    for name, b in (spec.get("linear") or {}).items():
        eta += float(b) * _col(cols, name, pname)
    for name, f in (spec.get("smooth") or {}).items():
        if isinstance(f, dict):
            fun, scale = f.get("fun"), float(f.get("scale", 1.0))
            center, width = float(f.get("center", 0.0)), float(f.get("width", 1.0))
        else:
            fun, scale, center, width = f, 1.0, 0.0, 1.0
        if fun not in SMOOTH:
            raise SimulationError(f"{pname}: unknown smooth function {fun!r}; use {sorted(SMOOTH)}")
        if width <= 0:
            raise SimulationError(f"{pname}: smooth width must be positive")
        eta += scale * SMOOTH[fun]((_col(cols, name, pname) - center) / width)
    for name, effects in (spec.get("categorical") or {}).items():
        col = _col(cols, name, pname)
        eta += np.array([float(effects.get(v, 0.0)) for v in col])
    return eta


def _col(cols, name, pname):
    if name not in cols:
        raise SimulationError(f"{pname}: predictor refers to unknown covariate {name!r}")
    return cols[name]


def simulate(spec: dict, n: int, seed: int | None = None,
             response: str = "y") -> tuple[Dataset, dict[str, np.ndarray]]:
    """Draw covariates, then the response from the family at the true parameters."""
    if n < 1:
        raise SimulationError("n must be positive")
    if not isinstance(spec, dict) or "family" not in spec or "eta" not in spec:
        raise SimulationError("generator spec needs 'family' and 'eta'")
    family = get_family(spec["family"])
    rng = np.random.default_rng(seed)
    cols, types = {}, {}
    for name, c in (spec.get("covariates") or {}).items():
        cols[name], types[name] = _covariate(rng, name, c or {}, n)
    eta_spec = spec["eta"]
    missing = set(family.param_names) - set(eta_spec)
    if missing:
        raise SimulationError(f"eta missing for parameters {sorted(missing)}")
    etas = [_predictor(eta_spec[p] or {}, cols, n, p) for p in family.param_names]
    theta = family.thetas(etas)
    y = family.sample(rng, *theta, size=n)
    cols[response], types[response] = y, CONTINUOUS
    truth = dict(zip(family.param_names, theta))
    return Dataset(cols, types), truth
