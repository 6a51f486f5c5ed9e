"""Interpretation of fitted models: prediction intervals and partial effects."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .boost import BoostModel
from .data import CATEGORICAL, CONTINUOUS, Dataset, format_value


class InferenceError(ValueError):
    pass


def write_table(path, columns: dict[str, Sequence], comment: str | None = None) -> None:
    """CSV with an optional leading ``#`` comment line; floats at full precision."""
    names = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([format_value(columns[c][i]) for c in names])


def marginal_grid(model: BoostModel, which: str, grid_points: int = 150) -> tuple[Dataset, dict]:
    """Grid over one covariate's training range, other covariates at mean / mode."""
    covs = model.covariates
    if which not in covs:
        raise InferenceError(f"{which!r} is not a covariate of the model (have {sorted(covs)})")
    if covs[which]["type"] != CONTINUOUS:
        raise InferenceError(f"{which!r} is categorical; intervals need a continuous covariate")
    info = covs[which]
    cols = {which: np.linspace(info["min"], info["max"], grid_points)}
    types = {which: CONTINUOUS}
    fixed = {}
    for name, info in covs.items():
        if name == which:
            continue
        if info["type"] == CATEGORICAL:
            fixed[name] = info["mode"]
            cols[name] = np.array([info["mode"]] * grid_points, dtype=object)
            types[name] = CATEGORICAL
        else:
            fixed[name] = info["mean"]
            cols[name] = np.full(grid_points, info["mean"])
            types[name] = CONTINUOUS
    return Dataset(cols, types), fixed


@dataclass
class PredictionIntervalTable:
    covariate: str
    grid: np.ndarray
    median: np.ndarray
    bounds: dict[float, tuple[np.ndarray, np.ndarray]]
    fixed: dict = field(default_factory=dict)
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def is_nested(self) -> bool:
        levels = sorted(self.bounds)
        for lv in levels:
            lo, hi = self.bounds[lv]
            if np.any(lo > self.median) or np.any(self.median > hi):
                return False
        for a, b in zip(levels, levels[1:]):
            lo_a, hi_a = self.bounds[a]
            lo_b, hi_b = self.bounds[b]
            if np.any(lo_b > lo_a) or np.any(hi_a > hi_b):
                return False
        return True

    def columns(self, scale: float = 1.0) -> dict[str, np.ndarray]:
        """Table columns; y-scale quantities are divided by ``scale``."""
        out = {self.covariate: self.grid, "median": self.median / scale}
        for lv in sorted(self.bounds):
            pct = f"{100 * lv:g}"
            out[f"lo{pct}"] = self.bounds[lv][0] / scale
            out[f"hi{pct}"] = self.bounds[lv][1] / scale
        return out


def predint(model: BoostModel, which: str, pi: Sequence[float] = (0.8, 0.9),
            grid_points: int = 150) -> PredictionIntervalTable:
    """Marginal prediction intervals from conditional quantiles along one covariate."""
    pi = [float(p) for p in np.atleast_1d(pi)]
    if not pi:
        raise InferenceError("no coverage levels given")
    if any(not 0 < p < 1 for p in pi):
        raise InferenceError(f"coverage levels must lie in (0, 1), got {pi}")
    newdata, fixed = marginal_grid(model, which, grid_points)
    pred = model.predict(newdata, type="response")
    theta = [pred[n] for n in model.param_names]
    fam = model.family
    median = np.asarray(fam.quantile(0.5, *theta), dtype=float)
    bounds = {p: (np.asarray(fam.quantile((1 - p) / 2, *theta), dtype=float),
                  np.asarray(fam.quantile((1 + p) / 2, *theta), dtype=float)) for p in pi}
    return PredictionIntervalTable(which, newdata[which], median, bounds, fixed, pred)


@dataclass
class PartialEffectTable:
    parameter: str
    learner: str
    covariate: str
    grid: np.ndarray
    effect: np.ndarray
    selected: bool


def _learner_grid(model: BoostModel, lr, grid_points: int):
    cov = lr.spec.covariate
    if cov is None:
        return "(intercept)", np.zeros(1), Dataset({}, {})
    info = model.covariates[cov]
    if info["type"] == CATEGORICAL:
        grid = np.array(lr.levels, dtype=object)
        return cov, grid, Dataset({cov: grid}, {cov: CATEGORICAL})
    grid = np.linspace(info["min"], info["max"], grid_points)
    return cov, grid, Dataset({cov: grid}, {cov: CONTINUOUS})


def partial_effects(model: BoostModel, parameters=None, which=None,
                    grid_points: int = 150) -> list[PartialEffectTable]:
    """Each selected learner's own contribution on the link scale (no offset).

    ``which`` accepts learner indices, name substrings or a list of either.
    """
    tables = []
    coefs = model.coef(parameters)
    selected = model.selected(parameters)
    for name in coefs:
        k = model.family.index(name)
        for j in model.resolve_learners(k, which):
            lr = model.learners[k][j]
            c = coefs[name][lr.name]
            cov, grid, nd = _learner_grid(model, lr, grid_points)
            if lr.spec.covariate is None:
                effect = np.full(1, c[0] if c.size else 0.0)
            else:
                effect = lr.evaluate(c, nd)
            tables.append(PartialEffectTable(name, lr.name, cov, grid, effect,
                                             j in selected[name]))
    if not tables:
        raise InferenceError(f"no learner matches selector {which!r}")
    return tables


@dataclass
class RegionSummary:
    parameter: str
    learner: str
    regions: list[str]
    values: np.ndarray
    counts: np.ndarray
    scale: str


def region_summary(model: BoostModel, region: str, parameters=None, response: bool = False,
                   agg: str = "mean") -> list[RegionSummary]:
    """Per-region aggregate of the region learner's fitted contribution.

    With training data attached, contributions of the training observations
    are aggregated by region; otherwise each observed level's value is used.
    """
    if agg not in ("mean", "median"):
        raise InferenceError("agg must be 'mean' or 'median'")
    reducer = np.mean if agg == "mean" else np.median
    out = []
    coefs = model.coef(parameters)
    for name in coefs:
        k = model.family.index(name)
        link = model.family.links[k]
        for lr in model.learners[k]:
            if lr.spec.covariate != region or lr.spec.kind not in ("mrf", "ridge_categorical"):
                continue
            c = coefs[name][lr.name]
            if model.data is not None:
                labels = model.data[region].astype(str)
                vals = lr.evaluate(c, model.data.select([region]))
            else:
                info = model.covariates.get(region, {})
                labels = np.array(info.get("levels", lr.levels), dtype=object)
                vals = lr.evaluate(c, Dataset({region: labels}, {region: CATEGORICAL}))
            if response:
                vals = link.forward(vals)
            regions = sorted(set(labels))
            values = np.array([reducer(vals[labels == r]) for r in regions])
            counts = np.array([int(np.sum(labels == r)) for r in regions])
            out.append(RegionSummary(name, lr.name, regions, values, counts,
                                     "response" if response else "link"))
    if not out:
        raise InferenceError(f"no mrf or ridge_categorical learner on {region!r}")
    return out
