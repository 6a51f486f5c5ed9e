"""Penalized least-squares base-learners.

A base-learner is described by a :class:`BaseLearnerSpec`.  Resolving the
spec against training data fixes its geometry (knot vector, category levels)
and yields a :class:`Learner`, which can build design matrices for any data.
A :class:`LearnerWorkspace` additionally caches, for one weight vector, the
smoothing operator ``(X'WX + lam P)^-1 X'W`` so each boosting step costs a
single matrix-vector product.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import linalg, sparse
from scipy.interpolate import BSpline
from scipy.sparse import csgraph

from .data import CATEGORICAL, CONTINUOUS, Dataset

KINDS = ("linear", "pspline", "ridge_categorical", "mrf")

LOG_LAMBDA_BRACKET = (-30.0, 30.0)
DF_TOL = 1e-4


class LearnerError(ValueError):
    """Invalid learner specification or data incompatible with it."""


class CalibrationError(LearnerError):
    """No penalty in the search bracket attains the requested df."""


class NumericError(ArithmeticError):
    """Normal equations are singular even after penalization."""


@dataclass(frozen=True)
class MRFGraph:
    """Neighbourhood structure over labelled regions."""

    labels: tuple[str, ...]
    adjacency: np.ndarray = field(compare=False)

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        r = len(self.labels)
        if a.shape != (r, r):
            raise LearnerError(f"adjacency is {a.shape}, expected ({r}, {r})")
        if len(set(self.labels)) != r:
            raise LearnerError("duplicate region labels")
        if not np.array_equal(a, a.T):
            raise LearnerError("adjacency matrix is not symmetric")
        if np.any(a < 0):
            raise LearnerError("adjacency matrix has negative entries")
        if np.any(np.diag(a) != 0):
            raise LearnerError("adjacency matrix has a non-zero diagonal")

    def __eq__(self, other):
        return (isinstance(other, MRFGraph) and self.labels == other.labels
                and np.array_equal(self.adjacency, other.adjacency))

    def __hash__(self):
        return hash(self.labels)

    @property
    def penalty(self) -> np.ndarray:
        """Graph Laplacian D - A."""
        return np.diag(self.adjacency.sum(axis=1)) - self.adjacency

    @property
    def n_components(self) -> int:
        return int(csgraph.connected_components(sparse.csr_matrix(self.adjacency), directed=False)[0])

    @classmethod
    def from_edges(cls, edges, labels=None) -> "MRFGraph":
        edges = [(str(a), str(b)) for a, b in edges]
        if labels is None:
            labels = sorted({x for e in edges for x in e})
        labels = tuple(str(x) for x in labels)
        pos = {lab: i for i, lab in enumerate(labels)}
        a = np.zeros((len(labels), len(labels)))
        for u, v in edges:
            if u == v:
                raise LearnerError(f"self-loop at region {u!r}")
            a[pos[u], pos[v]] = a[pos[v], pos[u]] = 1.0
        return cls(labels, a)

    @classmethod
    def read(cls, path: str | Path) -> "MRFGraph":
        """Read a square labelled CSV matrix or an edge list (``a,b`` per line)."""
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if not rows:
            raise LearnerError(f"{path} is empty")
        width = len(rows[0])
        if width == 2 and all(len(r) == 2 for r in rows):
            return cls.from_edges([(a.strip(), b.strip()) for a, b in rows])
        labels = [c.strip() for c in rows[0][1:]]
        body = rows[1:]
        if len(body) != len(labels) or any(len(r) != len(labels) + 1 for r in body):
            raise LearnerError(f"{path}: adjacency CSV must be square with label header row/column")
        if [r[0].strip() for r in body] != labels:
            raise LearnerError(f"{path}: row labels do not match column labels")
        a = np.array([[float(c) for c in r[1:]] for r in body])
        return cls(tuple(labels), a)

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "adjacency": self.adjacency.tolist()}

    @classmethod
    def from_dict(cls, d) -> "MRFGraph":
        return cls(tuple(d["labels"]), np.array(d["adjacency"], dtype=float))


@dataclass(frozen=True)
class BaseLearnerSpec:
    """What to fit: learner kind, covariate and kind-specific hyperparameters.

    ``linear`` with ``covariate=None`` is the intercept-only learner.
    """

    kind: str
    covariate: str | None = None
    intercept: bool = True
    knots: int = 20
    degree: int = 3
    diff_order: int = 2
    df: float = 4.0
    graph: MRFGraph | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LearnerError(f"unknown learner kind {self.kind!r}; choose from {KINDS}")
        if self.kind != "linear" and self.covariate is None:
            raise LearnerError(f"{self.kind} learner needs a covariate")
        if self.kind == "linear" and self.covariate is None and not self.intercept:
            raise LearnerError("linear learner without covariate and intercept is empty")
        if self.kind == "pspline":
            if self.degree < 1:
                raise LearnerError("pspline degree must be >= 1")
            if self.knots < 5:
                raise LearnerError("pspline needs at least 5 interior knots")
            if self.diff_order not in (1, 2, 3):
                raise LearnerError("pspline difference order must be 1, 2 or 3")
            nbasis = self.knots + self.degree + 1
            if not self.diff_order < self.df < nbasis:
                raise LearnerError(
                    f"pspline df={self.df} must lie in ({self.diff_order}, {nbasis})")
        if self.kind in ("ridge_categorical", "mrf") and self.df <= 0:
            raise LearnerError("df must be positive")
        if self.kind == "mrf" and self.graph is None:
            raise LearnerError("mrf learner needs a neighbourhood graph")

    @property
    def name(self) -> str:
        if self.covariate is None:
            return "linear(intercept)"
        return f"{self.kind}({self.covariate})"

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "covariate": self.covariate}
        if self.kind == "linear":
            d["intercept"] = self.intercept
        if self.kind == "pspline":
            d.update(knots=self.knots, degree=self.degree, diff_order=self.diff_order)
        if self.kind != "linear":
            d["df"] = self.df
        if self.graph is not None:
            d["graph"] = self.graph.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "BaseLearnerSpec":
        d = dict(d)
        if d.get("graph") is not None:
            d["graph"] = MRFGraph.from_dict(d["graph"])
        return cls(**d)


def bspline_knots(lo: float, hi: float, n_interior: int, degree: int) -> np.ndarray:
    """Equidistant knots on [lo, hi] extended by ``degree`` knots at each end."""
    h = (hi - lo) / (n_interior + 1)
    return lo + h * np.arange(-degree, n_interior + degree + 2)


def bspline_basis(x, knots: np.ndarray, degree: int) -> np.ndarray:
    """Dense B-spline design; polynomial continuation outside the knot span."""
    x = np.asarray(x, dtype=float)
    return BSpline.design_matrix(x, knots, degree, extrapolate=True).toarray()


def difference_matrix(d: int, order: int) -> np.ndarray:
    return np.diff(np.eye(d), n=order, axis=0)


@dataclass(frozen=True, eq=False)
class Learner:
    """A spec whose geometry has been fixed on training data."""

    spec: BaseLearnerSpec
    knots: np.ndarray | None = None
    levels: tuple[str, ...] | None = None

    @classmethod
    def resolve(cls, spec: BaseLearnerSpec, data: Dataset) -> "Learner":
        cov = spec.covariate
        if cov is not None and cov not in data:
            raise LearnerError(f"{spec.name}: covariate {cov!r} not in data")
        if spec.kind in ("linear", "pspline") and cov is not None:
            if data.types[cov] != CONTINUOUS:
                raise LearnerError(f"{spec.name}: covariate {cov!r} must be continuous")
        if spec.kind in ("ridge_categorical", "mrf") and data.types[cov] != CATEGORICAL:
            raise LearnerError(f"{spec.name}: covariate {cov!r} must be categorical")

        if spec.kind == "pspline":
            x = data[cov]
            lo, hi = float(np.min(x)), float(np.max(x))
            if not hi > lo:
                raise CalibrationError(f"{spec.name}: covariate is constant, cannot place knots")
            return cls(spec, knots=bspline_knots(lo, hi, spec.knots, spec.degree))
        if spec.kind == "ridge_categorical":
            return cls(spec, levels=data.levels(cov))
        if spec.kind == "mrf":
            labels = spec.graph.labels
            unknown = sorted(set(data[cov]) - set(labels))
            if unknown:
                raise LearnerError(f"{spec.name}: regions {unknown[:5]} not in the graph")
            return cls(spec, levels=labels)
        return cls(spec)

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def n_coef(self) -> int:
        s = self.spec
        if s.kind == "linear":
            return int(s.intercept) + int(s.covariate is not None)
        if s.kind == "pspline":
            return len(self.knots) - s.degree - 1
        return len(self.levels)

    def design(self, data: Dataset) -> np.ndarray:
        s = self.spec
        if s.kind == "linear":
            cols = []
            if s.intercept:
                cols.append(np.ones(data.n))
            if s.covariate is not None:
                cols.append(np.asarray(data[s.covariate], dtype=float))
            return np.column_stack(cols)
        if s.kind == "pspline":
            return bspline_basis(data[s.covariate], self.knots, s.degree)
        values = data[s.covariate]
        pos = {lab: i for i, lab in enumerate(self.levels)}
        try:
            idx = np.array([pos[str(v)] for v in values], dtype=int)
        except KeyError as exc:
            raise LearnerError(f"{s.name}: unseen level {exc.args[0]!r}") from None
        x = np.zeros((len(values), len(self.levels)))
        x[np.arange(len(values)), idx] = 1.0
        return x

    def penalty(self) -> np.ndarray:
        s = self.spec
        d = self.n_coef
        if s.kind == "linear":
            return np.zeros((d, d))
        if s.kind == "pspline":
            D = difference_matrix(d, s.diff_order)
            return D.T @ D
        if s.kind == "ridge_categorical":
            return np.eye(d)
        return s.graph.penalty

    def null_space_dim(self) -> int:
        s = self.spec
        if s.kind == "pspline":
            return s.diff_order
        if s.kind == "mrf":
            return s.graph.n_components
        return 0

    def evaluate(self, coef, data: Dataset) -> np.ndarray:
        return self.design(data) @ np.asarray(coef, dtype=float)

    def to_dict(self) -> dict:
        d = {"spec": self.spec.to_dict()}
        if self.knots is not None:
            d["knots"] = self.knots.tolist()
        if self.levels is not None and self.spec.kind != "mrf":
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d) -> "Learner":
        spec = BaseLearnerSpec.from_dict(d["spec"])
        knots = np.array(d["knots"], dtype=float) if "knots" in d else None
        levels = tuple(d["levels"]) if "levels" in d else None
        if spec.kind == "mrf":
            levels = spec.graph.labels
        return cls(spec, knots=knots, levels=levels)


def hat_trace(F: np.ndarray, P: np.ndarray, lam: float) -> float:
    """trace((F + lam P)^-1 F), the df of the penalized smoother."""
    return float(np.trace(linalg.solve(F + lam * P, F, assume_a="sym")))


def calibrate_lambda(X: np.ndarray, P: np.ndarray, weights, target_df: float,
                     null_dim: int = 0, name: str = "learner") -> float:
    """Penalty giving a hat-matrix trace of ``target_df``, by bisection on log(lambda)."""
    w = np.asarray(weights, dtype=float)
    F = X.T @ (w[:, None] * X)
    rank = np.linalg.matrix_rank(F)
    if not null_dim < target_df < rank:
        raise CalibrationError(
            f"{name}: df={target_df} unattainable (must lie in ({null_dim}, {rank}))")
    lo, hi = LOG_LAMBDA_BRACKET

    def df(loglam):
        return hat_trace(F, P, float(np.exp(loglam)))

    df_lo, df_hi = df(lo), df(hi)
    if not df_hi - DF_TOL <= target_df <= df_lo + DF_TOL:
        raise CalibrationError(
            f"{name}: df={target_df} outside [{df_hi:.4f}, {df_lo:.4f}] reachable "
            f"for log(lambda) in {LOG_LAMBDA_BRACKET}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = df(mid)
        if abs(val - target_df) < 1e-8 or hi - lo < 1e-13:
            break
        # df decreases in lambda
        if val > target_df:
            lo = mid
        else:
            hi = mid
    lam = float(np.exp(mid))
    if abs(hat_trace(F, P, lam) - target_df) >= DF_TOL:
        raise CalibrationError(f"{name}: bisection did not reach df={target_df}")
    return lam


class LearnerWorkspace:
    """Design, penalty and cached smoothing operator for one weight vector."""

    def __init__(self, learner: Learner, X: np.ndarray, weights, lam: float | None = None):
        self.learner = learner
        self.X = X
        self.weights = np.asarray(weights, dtype=float)
        self.P = learner.penalty()
        spec = learner.spec
        if lam is None:
            lam = 0.0 if spec.kind == "linear" else calibrate_lambda(
                X, self.P, self.weights, spec.df, learner.null_space_dim(), spec.name)
        self.lam = float(lam)
        WX = self.weights[:, None] * X
        A = X.T @ WX + self.lam * self.P
        try:
            self._chol = linalg.cho_factor(A, lower=True)
        except linalg.LinAlgError:
            raise NumericError(f"{spec.name}: normal equations are singular") from None
        # (X'WX + lam P)^-1 X'W, one row per coefficient
        self.smoother = linalg.cho_solve(self._chol, WX.T)

    @property
    def name(self) -> str:
        return self.learner.name

    def df(self) -> float:
        F = self.X.T @ (self.weights[:, None] * self.X)
        return hat_trace(F, self.P, self.lam)

    def solve(self, u) -> np.ndarray:
        """Coefficients from the cached factorization of the normal equations."""
        return linalg.cho_solve(self._chol, self.X.T @ (self.weights * u))

    def fit(self, u) -> tuple[np.ndarray, float]:
        coef = self.smoother @ u
        r = u - self.X @ coef
        return coef, float(np.dot(self.weights, r * r))


def build_workspace(spec: BaseLearnerSpec | Learner, data: Dataset, weights=None) -> LearnerWorkspace:
    learner = spec if isinstance(spec, Learner) else Learner.resolve(spec, data)
    if weights is None:
        weights = np.ones(data.n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (data.n,):
        raise LearnerError("weights length does not match data")
    return LearnerWorkspace(learner, learner.design(data), weights)


def fit_learner(ws: LearnerWorkspace, gradient, weights=None) -> tuple[np.ndarray, float]:
    """Penalized least-squares fit of ``gradient``; returns (coefficients, weighted SSR)."""
    u = np.asarray(gradient, dtype=float)
    if u.shape != (ws.X.shape[0],):
        raise LearnerError(f"gradient has length {u.size}, expected {ws.X.shape[0]}")
    if weights is not None and not np.array_equal(np.asarray(weights, dtype=float), ws.weights):
        ws = LearnerWorkspace(ws.learner, ws.X, weights)
    return ws.fit(u)


def evaluate_learner(learner: Learner, coefficients, newdata: Dataset) -> np.ndarray:
    return learner.evaluate(coefficients, newdata)
