"""Multi-dimensional early stopping by subsampling.

The out-of-bag risk is evaluated on a grid of stopping vectors.  Grid
points are scored while walking the iteration path of the boosting fit:
every point whose path is a prefix of a longer one (in particular all
points with mu-count at least the other counts, the dense-mu points) is
scored on the way, so a fold fits each distinct path only once.
"""

from __future__ import annotations

import builtins
import csv
import itertools
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .boost import BoostControl, BoostModel, path_events
from .data import format_value
from .families import compute_offset, get_family


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class StopGrid:
    """Sorted, duplicate-free set of stopping vectors (one row per point)."""

    points: np.ndarray
    names: tuple[str, ...]
    dense_mu: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return (tuple(int(v) for v in p) for p in self.points)

    def __contains__(self, point):
        return tuple(int(v) for v in point) in self._point_set

    @cached_property
    def _point_set(self) -> frozenset:
        return frozenset(self)

    @property
    def max(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.points.max(axis=0))

    @property
    def min(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.points.min(axis=0))

    @classmethod
    def from_points(cls, points, names, **kw) -> "StopGrid":
        pts = sorted({tuple(int(v) for v in p) for p in points})
        if not pts:
            raise TuningError("empty grid")
        arr = np.array(pts, dtype=int).reshape(len(pts), len(names))
        if np.any(arr < 1):
            raise TuningError("grid stopping iterations must be >= 1")
        return cls(arr, tuple(names), **kw)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"mstop_{n}" for n in self.names])
            w.writerows(self.points.tolist())


def grid_axis(lo: int, hi: int, length_out: int, log_scale: bool = True) -> np.ndarray:
    if log_scale:
        vals = np.exp(np.linspace(np.log(lo), np.log(hi), length_out))
    else:
        vals = np.linspace(lo, hi, length_out)
    axis = np.unique(np.floor(vals + 0.5).astype(int))
    if axis.size == 0:
        raise TuningError("empty grid axis")
    return axis


def make_grid(max: Mapping[str, int] | Sequence[int], min: int = 20, length_out: int = 10,
              log_scale: bool = True, dense_mu: bool = True,
              names: Sequence[str] | None = None) -> StopGrid:
    """Cartesian grid of stopping vectors, optionally with a dense mu axis.

    With ``dense_mu`` every mu-count from the largest other count up to the
    mu maximum is added for each combination of the other axes; those points
    lie on iteration paths that are computed anyway.
    """
    if isinstance(max, Mapping):
        names = tuple(max)
        maxima = [int(max[n]) for n in names]
    else:
        maxima = [int(m) for m in max]
        names = tuple(names) if names is not None else ("mu", "sigma", "nu", "tau")[:len(maxima)]
    if len(names) != len(maxima):
        raise TuningError("names and maxima differ in length")
    if min < 1:
        raise TuningError("min must be >= 1")
    if length_out < 2:
        raise TuningError("length_out must be >= 2")
    for n, m in zip(names, maxima):
        if m < min:
            raise TuningError(f"max for {n!r} ({m}) is below min ({min})")
    axes = [grid_axis(min, m, length_out, log_scale) for m in maxima]
    points = set(itertools.product(*(a.tolist() for a in axes)))
    if dense_mu and len(axes) > 1:
        for others in itertools.product(*(a.tolist() for a in axes[1:])):
            lo = builtins.max(others)
            points.update((m,) + others for m in range(lo, maxima[0] + 1))
    return StopGrid.from_points(points, names, dense_mu=dense_mu,
                                params={"max": dict(zip(names, maxima)), "min": min,
                                        "length_out": length_out, "log_scale": log_scale})


@dataclass(frozen=True)
class FoldSet:
    """n x B matrix of 0/1 in-bag indicators (columns are folds)."""

    weights: np.ndarray
    type: str = "subsampling"
    seed: int | None = None
    fraction: float = 0.5

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def B(self) -> int:
        return self.weights.shape[1]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"fold{b + 1}" for b in range(self.B)])
            w.writerows(self.weights.astype(int).tolist())


def make_folds(n: int, B: int = 25, type: str = "subsampling", fraction: float = 0.5,
               seed: int | None = None) -> FoldSet:
    """Subsampling folds: each column puts floor(fraction * n) observations in-bag."""
    if type != "subsampling":
        raise TuningError(f"fold type {type!r} not supported (only 'subsampling')")
    if n < 20:
        raise TuningError("need at least 20 observations for subsampling")
    if B < 2:
        raise TuningError("need at least 2 folds")
    if not 0 < fraction <= 0.9:
        raise TuningError("fraction must lie in (0, 0.9] to keep 10% out-of-bag")
    rng = np.random.default_rng(seed)
    size = int(np.floor(fraction * n))
    w = np.zeros((n, B))
    for b in range(B):
        w[rng.choice(n, size=size, replace=False), b] = 1.0
    return FoldSet(w, type, seed, fraction)


@dataclass
class CVResult:
    """Out-of-bag mean negative log-likelihood, one row per fold."""

    grid: StopGrid
    risk: np.ndarray
    failed: np.ndarray

    def mean_risk(self) -> np.ndarray:
        ok = ~self.failed
        if not np.any(ok):
            raise TuningError("all folds failed")
        return self.risk[ok].mean(axis=0)

    def to_csv(self, path) -> None:
        names = self.grid.names
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold"] + [f"mstop_{n}" for n in names] + ["oob_risk"])
            for b in range(self.risk.shape[0]):
                for g, pt in enumerate(self.grid.points):
                    w.writerow([b + 1] + pt.tolist() + [format_value(self.risk[b, g])])


@dataclass(frozen=True)
class MstopChoice:
    mstop: dict[str, int]
    risk: float
    boundary: tuple[str, ...]

    @property
    def at_boundary(self) -> bool:
        return bool(self.boundary)

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.mstop.values())


def path_plan(grid: StopGrid) -> list[tuple[tuple[int, ...], dict[int, list[int]]]]:
    """Distinct paths to fit and, per path, grid indices keyed by event count."""
    pts = list(grid)
    # a point with mu-count >= all other counts lies on the path to the largest
    # such mu-count sharing its other coordinates
    top: dict[tuple[int, ...], int] = {}
    for p in pts:
        if p[0] >= builtins.max(p[1:], default=0):
            top[p[1:]] = builtins.max(top.get(p[1:], 0), p[0])
    plans: dict[tuple[int, ...], dict[int, list[int]]] = {}
    for g, p in enumerate(pts):
        if p[0] >= builtins.max(p[1:], default=0):
            end = (top[p[1:]],) + p[1:]
        else:
            end = p
        plans.setdefault(end, {}).setdefault(len(path_events(p)), []).append(g)
    return sorted(plans.items())


def _fold_payload(template: BoostModel) -> dict:
    if template.data is None:
        raise TuningError("template model has no attached training data")
    return {"family": template.family.name, "learners": template.learners,
            "nu": template.nu, "stabilization": template.control.stabilization,
            "response": template.response, "data": template.data,
            "weights": template.weights}


def _fold_risk(payload: dict, fold_w: np.ndarray, grid: StopGrid) -> np.ndarray:
    data = payload["data"]
    base_w = payload["weights"]
    w = fold_w * base_w
    oob = (fold_w == 0) & (base_w > 0)
    if not np.any(oob):
        raise TuningError("fold has no out-of-bag observations")
    names = grid.names
    control = BoostControl(mstop=1, nu=dict(zip(names, payload["nu"])),
                           stabilization=payload["stabilization"])
    family = get_family(payload["family"])
    y = family.check_response(data[payload["response"]])
    offsets = compute_offset(family, y, w)
    model = BoostModel(family, payload["learners"], offsets, control,
                       response=payload["response"], data=data, weights=w)
    model.track_risk = False
    y_oob = y[oob]
    out = np.full(len(grid), np.nan)

    def scorer(idx):
        def score(eta):
            theta = family.thetas([e[oob] for e in eta])
            val = -np.mean(family.loglik(y_oob, *theta))
            for g in idx:
                out[g] = val
        return score

    for end, probes in path_plan(grid):
        model._walk(end, probes={c: scorer(idx) for c, idx in probes.items()})
    return out


def _run_fold(args):
    payload, fold_w, grid, b = args
    try:
        return b, _fold_risk(payload, fold_w, grid), None
    except Exception as exc:  # reported as a masked fold
        return b, None, f"{type(exc).__name__}: {exc}"


def cv_risk(template: BoostModel, grid: StopGrid, folds: FoldSet, cores: int = 1) -> CVResult:
    """Out-of-bag risk for every grid point and fold.

    Folds run in ``cores`` worker processes; results are merged by fold
    index so the matrix does not depend on scheduling.
    """
    if tuple(grid.names) != tuple(template.param_names):
        raise TuningError(f"grid parameters {grid.names} do not match the family "
                          f"{template.param_names}")
    payload = _fold_payload(template)
    if folds.n != template.data.n:
        raise TuningError(f"folds are for {folds.n} observations, data has {template.data.n}")
    jobs = [(payload, folds.weights[:, b], grid, b) for b in range(folds.B)]
    if cores > 1:
        with ProcessPoolExecutor(max_workers=cores) as ex:
            results = list(ex.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    risk = np.full((folds.B, len(grid)), np.nan)
    failed = np.zeros(folds.B, dtype=bool)
    for b, row, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            warnings.warn(f"fold {b + 1} failed and is masked: {err}", RuntimeWarning, stacklevel=2)
            failed[b] = True
        else:
            risk[b] = row
    if np.all(failed):
        raise TuningError("all folds failed")
    return CVResult(grid, risk, failed)


def optimal_mstop(cvr: CVResult) -> MstopChoice:
    """Grid point minimizing the fold-averaged risk.

    Ties go to the smallest total iteration count, then the lexicographically
    smallest vector.  Warns when the optimum lies on the edge of the grid.
    """
    mean = cvr.mean_risk()
    best = np.nanmin(mean)
    cands = [tuple(int(v) for v in cvr.grid.points[g]) for g in np.flatnonzero(mean == best)]
    choice = min(cands, key=lambda p: (sum(p), p))
    gmax, gmin = cvr.grid.max, cvr.grid.min
    boundary = tuple(n for n, v, lo, hi in zip(cvr.grid.names, choice, gmin, gmax)
                     if v == hi or (v == lo and lo > 1))
    if boundary:
        warnings.warn(f"optimal mstop {choice} lies on the grid boundary for {boundary}; "
                      "consider re-running with a larger grid", RuntimeWarning, stacklevel=2)
    return MstopChoice(dict(zip(cvr.grid.names, choice)), float(best), boundary)
