"""Cyclic component-wise gradient boosting over distribution parameters.

One outer iteration visits the parameters in the family's declared order.
Each still-active parameter gets one update: the gradient of the
log-likelihood with respect to its additive predictor is computed at the
current estimates (including updates already made in this iteration), every
candidate base-learner is fitted to it, and the best least-squares fit,
scaled by the step length, is added to the predictor.  A parameter whose
stopping iteration has been reached is skipped.

The sequence of (iteration, parameter) events is therefore a function of the
stopping vector alone, see :func:`path_events`.  A model keeps the longest
event history it has computed and replays it whenever a requested stopping
vector shares a prefix with it.
"""

from __future__ import annotations

import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import CATEGORICAL, Dataset
from .families import Family, compute_offset, get_family
from .learners import BaseLearnerSpec, Learner, LearnerWorkspace

FORMAT_VERSION = 1
STABILIZATION = ("none", "mad")


class BoostError(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


def _per_param(value, names: Sequence[str], what: str) -> tuple:
    if isinstance(value, Mapping):
        missing = set(names) - set(value)
        extra = set(value) - set(names)
        if missing or extra:
            raise ValueError(f"{what}: expected keys {list(names)}, got {list(value)}")
        return tuple(value[n] for n in names)
    if np.ndim(value) == 0:
        return (value,) * len(names)
    value = tuple(value)
    if len(value) != len(names):
        raise ValueError(f"{what}: expected {len(names)} values, got {len(value)}")
    return value


@dataclass
class BoostControl:
    """Stopping iterations, step lengths and gradient stabilization.

    ``mstop`` and ``nu`` accept a scalar (used for every parameter), a
    sequence in parameter order or a mapping keyed by parameter name.
    """

    mstop: int | Sequence[int] | Mapping[str, int] = 100
    nu: float | Sequence[float] | Mapping[str, float] = 0.1
    trace: bool = False
    stabilization: str = "none"

    def __post_init__(self):
        if self.stabilization not in STABILIZATION:
            raise ValueError(f"stabilization must be one of {STABILIZATION}")

    def resolve(self, family: Family) -> tuple[tuple[int, ...], tuple[float, ...]]:
        names = family.param_names
        mstop = tuple(int(m) for m in _per_param(self.mstop, names, "mstop"))
        nu = tuple(float(v) for v in _per_param(self.nu, names, "nu"))
        if any(m < 1 for m in mstop):
            raise ValueError(f"mstop must be >= 1 for every parameter, got {mstop}")
        if any(not 0 < v < 1 for v in nu):
            raise ValueError(f"step length nu must lie in (0, 1), got {nu}")
        return mstop, nu

    def to_dict(self, family: Family) -> dict:
        mstop, nu = self.resolve(family)
        names = family.param_names
        return {"mstop": dict(zip(names, mstop)), "nu": dict(zip(names, nu)),
                "trace": self.trace, "stabilization": self.stabilization}


@dataclass(frozen=True)
class FittedLearnerUpdate:
    """One boosting step: ``increment`` is the selected fit already times nu."""

    iteration: int
    parameter: int
    learner: int
    increment: np.ndarray = field(compare=False)


def path_events(mstop: Sequence[int]) -> list[tuple[int, int]]:
    """Ordered (iteration, parameter) updates performed to reach ``mstop``."""
    mstop = tuple(int(m) for m in mstop)
    return [(m, k) for m in range(1, max(mstop, default=0) + 1)
            for k in range(len(mstop)) if m <= mstop[k]]


def stabilize(u, mode: str = "none") -> np.ndarray:
    """Scale a gradient vector by its median absolute deviation.

    Falls back to the mean absolute deviation, then to no scaling, when the
    spread is below 1e-10.
    """
    u = np.asarray(u, dtype=float)
    if mode == "none":
        return u
    if mode != "mad":
        raise ValueError(f"unknown stabilization {mode!r}")
    dev = np.abs(u - np.median(u))
    mad = np.median(dev)
    if mad < 1e-10:
        mad = np.mean(np.abs(u - np.mean(u)))
        if mad < 1e-10:
            return u
    return u / mad


def _common_prefix(a: Sequence, b: Sequence) -> int:
    n = min(len(a), len(b))
    i = 0
    while i < n and a[i] == b[i]:
        i += 1
    return i


def covariate_summary(data: Dataset, names: Sequence[str]) -> dict:
    out = {}
    for name in names:
        col = data[name]
        if data.types[name] == CATEGORICAL:
            levels, counts = np.unique(col.astype(str), return_counts=True)
            # ties resolve to the lexicographically smallest label
            mode = str(levels[np.argmax(counts)])
            out[name] = {"type": CATEGORICAL, "levels": [str(v) for v in levels], "mode": mode}
        else:
            out[name] = {"type": "continuous", "min": float(np.min(col)),
                         "max": float(np.max(col)), "mean": float(np.mean(col))}
    return out


class _TracePrinter:
    """Block-style progress output: dots per iteration, risk every 35."""

    def __init__(self, total, stream=None):
        self.total = total
        self.stream = stream or sys.stderr

    def __call__(self, m, risk):
        s = self.stream
        if m % 35 == 1:
            s.write(f"[{m:4d}] ")
        if m == self.total:
            s.write(f"\nFinal risk: {risk:.7g}\n")
        elif m % 35 == 0:
            s.write(f". -- risk: {risk:.7g}\n")
        else:
            s.write(".")
        s.flush()


class BoostModel:
    """State of a boosted distributional regression model.

    Attributes of interest: ``family``, ``learners`` (per parameter),
    ``offsets``, ``history`` (all computed updates, possibly longer than the
    visible model) and ``eta`` (training predictors of the visible model).
    """

    def __init__(self, family, learners, offsets, control: BoostControl, *,
                 response: str, data: Dataset | None = None, weights=None,
                 fingerprint: str | None = None, covariates: dict | None = None,
                 lambdas=None, rescale: float = 1.0):
        self.family = get_family(family)
        self.learners: list[list[Learner]] = [list(ls) for ls in learners]
        if len(self.learners) != self.family.K:
            raise ValueError("need one learner list per parameter")
        self.offsets = np.asarray(offsets, dtype=float)
        self.control = control
        self.mstop_fit, self.nu = control.resolve(self.family)
        self.response = response
        self.rescale = float(rescale)
        self.data = data
        self.fingerprint = fingerprint or (data.fingerprint() if data is not None else None)
        self.covariates = covariates or {}
        n = data.n if data is not None else None
        self.weights = np.ones(n) if weights is None and n is not None else (
            None if weights is None else np.asarray(weights, dtype=float))
        self.history: list[FittedLearnerUpdate] = []
        self._visible = 0
        self._mstop = tuple(0 for _ in range(self.family.K))
        self.risk_trace: list[float] = []
        self._lambdas = lambdas
        self._workspaces: list[list[LearnerWorkspace]] | None = None
        self.eta: np.ndarray | None = None
        self.track_risk = True
        self.meta: dict = {}
        if data is not None:
            self.y = self.family.check_response(data[response])
            self.eta = np.tile(self.offsets[:, None], (1, data.n))

    # -- bookkeeping ------------------------------------------------------
    @property
    def param_names(self) -> tuple[str, ...]:
        return self.family.param_names

    @property
    def K(self) -> int:
        return self.family.K

    def mstop(self) -> dict[str, int]:
        """Currently visible per-parameter iteration counts."""
        return dict(zip(self.param_names, self._mstop))

    @property
    def visible_history(self) -> list[FittedLearnerUpdate]:
        return self.history[:self._visible]

    def learner_names(self, k) -> list[str]:
        return [lr.name for lr in self.learners[self.family.index(k)]]

    def _workspace_list(self) -> list[list[LearnerWorkspace]]:
        if self._workspaces is None:
            if self.data is None:
                raise BoostError("model has no attached training data; reload it with the "
                                 "matching dataset to continue fitting")
            ws = []
            for k, ls in enumerate(self.learners):
                row = []
                for j, lr in enumerate(ls):
                    X = lr.design(self.data)
                    lam = None if self._lambdas is None else self._lambdas[k][j]
                    row.append(LearnerWorkspace(lr, X, self.weights, lam=lam))
                ws.append(row)
            self._workspaces = ws
            self._lambdas = [[w.lam for w in row] for row in ws]
        return self._workspaces

    def lambdas(self) -> list[list[float]]:
        if self._lambdas is None:
            self._workspace_list()
        return [list(r) for r in self._lambdas]

    # -- fitting ----------------------------------------------------------
    def _risk(self) -> float:
        return self.family.nll(self.y, list(self.eta), self.weights)

    def _step(self, m: int, k: int) -> FittedLearnerUpdate:
        fam = self.family
        theta = fam.thetas(list(self.eta))
        u = fam.grad_eta(k, self.y, *theta)
        bad = ~np.isfinite(u)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise BoostError(f"non-finite gradient at iteration {m}, parameter "
                             f"{fam.param_names[k]!r}, observation {i}")
        u = stabilize(u, self.control.stabilization)
        best, best_ssr, best_coef = -1, np.inf, None
        for j, ws in enumerate(self._workspace_list()[k]):
            coef, ssr = ws.fit(u)
            # strict < : the lowest index wins exact ties
            if ssr < best_ssr:
                best, best_ssr, best_coef = j, ssr, coef
        if best < 0:
            raise BoostError(f"no base-learner produced a finite fit at iteration {m}, "
                             f"parameter {fam.param_names[k]!r}")
        return FittedLearnerUpdate(m, k, best, self.nu[k] * best_coef)

    def _apply(self, upd: FittedLearnerUpdate) -> None:
        ws = self._workspace_list()[upd.parameter][upd.learner]
        self.eta[upd.parameter] += ws.X @ upd.increment

    def _walk(self, target: tuple[int, ...], callback=None, probes=None) -> None:
        """Bring the visible model to ``target`` along its iteration path.

        ``probes`` maps an event count to a function called with the
        training predictors right after that many events.
        """
        if self.data is None:
            raise BoostError("model has no attached training data")
        events = path_events(target)
        visible = [(u.iteration, u.parameter) for u in self.visible_history]
        stored = [(u.iteration, u.parameter) for u in self.history]
        if _common_prefix(events, visible) == len(visible):
            start = len(visible)
        else:
            start = 0
            self.eta = np.tile(self.offsets[:, None], (1, self.data.n))
        n_reuse = _common_prefix(events, stored)
        first_m = events[start][0] if start < len(events) else None
        risk = self.risk_trace[:first_m - 1] if first_m else list(self.risk_trace)
        if start == 0:
            risk = []
        for i in range(start, len(events)):
            m, k = events[i]
            if i < n_reuse:
                upd = self.history[i]
            else:
                upd = self._step(m, k)
                if i == n_reuse:
                    del self.history[i:]
                self.history.append(upd)
            self._apply(upd)
            if probes and i + 1 in probes:
                probes[i + 1](self.eta)
            if not self.track_risk:
                continue
            if i + 1 == len(events) or events[i + 1][0] != m:
                risk.append(self._risk())
                if callback is not None:
                    callback(m, risk[-1])
        if not events:
            risk = []
        if self.track_risk and np.any(np.diff(risk) > 1e-8 * (1 + np.abs(risk[:-1]))):
            warnings.warn("training risk increased during boosting; the step length may be too "
                          "large for the gradient scale (try stabilization='mad' or a smaller nu)",
                          RuntimeWarning, stacklevel=3)
        self.risk_trace = risk
        self._visible = len(events)
        self._mstop = tuple(target)

    def subset(self, mstop) -> "BoostModel":
        """Set the visible stopping iterations, refitting along the path if needed.

        Reducing keeps the longer history for later replay; increasing or
        changing the path continues fitting from the shared prefix.  A scalar
        applies to every parameter.  Returns ``self``.
        """
        target = tuple(int(m) for m in _per_param(mstop, self.param_names, "mstop"))
        if any(m < 0 for m in target):
            raise ValueError("mstop must be non-negative")
        if target == self._mstop:
            return self
        events = path_events(target)
        stored = [(u.iteration, u.parameter) for u in self.history]
        if self.data is None:
            if _common_prefix(events, stored) < len(events):
                raise BoostError("changing the path needs the training data; "
                                 "reload the model with its dataset")
            # prediction-only model: truncate the visible history
            self._visible = len(events)
            self._mstop = target
            self.risk_trace = self.risk_trace[:0]
            return self
        self._walk(target)
        return self

    def __getitem__(self, mstop):
        return self.subset(mstop)

    def continue_fit(self, extra) -> "BoostModel":
        extra = _per_param(extra, self.param_names, "extra iterations")
        return self.subset(tuple(m + int(e) for m, e in zip(self._mstop, extra)))

    # -- extraction -------------------------------------------------------
    def _params(self, parameters) -> list[int]:
        if parameters is None:
            return list(range(self.K))
        if isinstance(parameters, (str, int, np.integer)):
            parameters = [parameters]
        return [self.family.index(p) for p in parameters]

    def resolve_learners(self, k: int, which) -> list[int]:
        """Learner indices for a selector: None (all), int, name substring or a list."""
        names = self.learner_names(k)
        if which is None:
            return list(range(len(names)))
        if isinstance(which, (str, int, np.integer)):
            which = [which]
        out = []
        for w in which:
            if isinstance(w, (int, np.integer)):
                if not 0 <= w < len(names):
                    raise IndexError(f"learner index {w} out of range for "
                                     f"{self.param_names[k]!r} ({len(names)} learners)")
                hits = [int(w)]
            else:
                hits = [j for j, nm in enumerate(names) if w in nm]
            out.extend(h for h in hits if h not in out)
        return sorted(out)

    def coef(self, parameters=None, which=None) -> dict[str, dict[str, np.ndarray]]:
        """Accumulated coefficient vectors per learner (zeros if never selected)."""
        out = {}
        for k in self._params(parameters):
            idx = self.resolve_learners(k, which)
            acc = {j: np.zeros(self.learners[k][j].n_coef) for j in idx}
            for u in self.visible_history:
                if u.parameter == k and u.learner in acc:
                    acc[u.learner] = acc[u.learner] + u.increment
            out[self.param_names[k]] = {self.learners[k][j].name: acc[j] for j in idx}
        return out

    def selected(self, parameters=None) -> dict[str, list[int]]:
        out = {}
        for k in self._params(parameters):
            out[self.param_names[k]] = [u.learner for u in self.visible_history if u.parameter == k]
        return out

    def risk(self) -> np.ndarray:
        return np.asarray(self.risk_trace, dtype=float)

    def offsets_dict(self) -> dict[str, float]:
        return dict(zip(self.param_names, self.offsets.tolist()))

    def extract(self, what: str, parameters=None, which=None):
        if what == "coef":
            return self.coef(parameters, which)
        if what == "selected":
            return self.selected(parameters)
        if what == "risk":
            return self.risk()
        if what == "mstop_current":
            return self.mstop()
        if what == "offsets":
            return self.offsets_dict()
        raise ValueError(f"unknown extract target {what!r}")

    # -- prediction -------------------------------------------------------
    def predict(self, newdata: Dataset | None = None, parameters=None, type: str = "link",
                which=None) -> dict[str, np.ndarray]:
        """Per-parameter predictions.

        With ``which`` only the selected learners' summed contribution is
        returned (no offset); ``type="response"`` applies the inverse link.
        """
        if type not in ("link", "response"):
            raise ValueError("type must be 'link' or 'response'")
        if newdata is None:
            if self.data is None:
                raise BoostError("no training data attached; pass newdata")
            newdata = self.data
        coefs = self.coef(parameters, which)
        out = {}
        for k in self._params(parameters):
            name = self.param_names[k]
            eta = np.zeros(newdata.n) if which is not None else np.full(newdata.n, self.offsets[k])
            for j in self.resolve_learners(k, which):
                c = coefs[name][self.learners[k][j].name]
                if np.any(c != 0):
                    eta = eta + self.learners[k][j].evaluate(c, newdata)
            out[name] = self.family.links[k].forward(eta) if type == "response" else eta
        return out

    def fitted(self, type: str = "link") -> dict[str, np.ndarray]:
        if self.eta is None:
            raise BoostError("no training data attached")
        out = {}
        for k, name in enumerate(self.param_names):
            e = self.eta[k].copy()
            out[name] = self.family.links[k].forward(e) if type == "response" else e
        return out

    # -- persistence ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "family": self.family.name,
            "response": self.response,
            "rescale": self.rescale,
            "control": self.control.to_dict(self.family),
            "fingerprint": self.fingerprint,
            "n": None if self.weights is None else int(len(self.weights)),
            "offsets": self.offsets.tolist(),
            "mstop_visible": list(self._mstop),
            "learners": [[lr.to_dict() for lr in ls] for ls in self.learners],
            "lambdas": self.lambdas() if self.data is not None or self._lambdas else None,
            "covariates": self.covariates,
            "weights": None if self.weights is None else self.weights.tolist(),
            "history": [[u.iteration, u.parameter, u.learner, u.increment.tolist()]
                        for u in self.history],
            "risk": list(self.risk_trace),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict, data: Dataset | None = None) -> "BoostModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ModelFileError(f"unsupported model format version {d.get('format_version')!r} "
                                 f"(expected {FORMAT_VERSION})")
        if data is not None and data.fingerprint() != d["fingerprint"]:
            raise ModelFileError("dataset fingerprint does not match the one the model was fitted on")
        c = d["control"]
        control = BoostControl(mstop=c["mstop"], nu=c["nu"], trace=c["trace"],
                               stabilization=c["stabilization"])
        learners = [[Learner.from_dict(x) for x in ls] for ls in d["learners"]]
        model = cls(d["family"], learners, d["offsets"], control, response=d["response"],
                    data=data, weights=d["weights"], fingerprint=d["fingerprint"],
                    covariates=d["covariates"], lambdas=d["lambdas"], rescale=d["rescale"])
        model.history = [FittedLearnerUpdate(m, k, j, np.array(inc, dtype=float))
                         for m, k, j, inc in d["history"]]
        target = tuple(d["mstop_visible"])
        model._visible = len(path_events(target))
        model._mstop = target
        model.risk_trace = [float(r) for r in d["risk"]]
        model.meta = d.get("meta", {})
        if data is not None:
            model.eta = np.tile(model.offsets[:, None], (1, data.n))
            for upd in model.visible_history:
                model._apply(upd)
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(serialize(self), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, data: Dataset | None = None) -> "BoostModel":
        return deserialize(Path(path).read_text(encoding="utf-8"), data)


def serialize(model: BoostModel) -> str:
    return json.dumps(model.to_dict(), indent=1, allow_nan=False) + "\n"


def deserialize(text: str, data: Dataset | None = None) -> BoostModel:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file is not valid JSON: {exc}") from exc
    return BoostModel.from_dict(d, data)


def _normalize_formulas(formulas, family: Family) -> list[list[BaseLearnerSpec]]:
    names = family.param_names
    if isinstance(formulas, Mapping):
        if set(formulas) != set(names):
            raise ValueError(f"formulas must have keys {list(names)}, got {list(formulas)}")
        out = [list(formulas[n]) for n in names]
    else:
        out = [list(formulas) for _ in names]
    for n, specs in zip(names, out):
        if not specs:
            raise ValueError(f"no base-learners given for parameter {n!r}")
    return out


def fit(data: Dataset, response: str, formulas, family="gaussian",
        control: BoostControl | None = None, weights=None, *, rescale: float = 1.0,
        callback=None) -> BoostModel:
    """Fit a boosted distributional regression model.

    ``formulas`` is either one list of :class:`BaseLearnerSpec` shared by all
    parameters or a mapping from parameter name to such a list.
    """
    family = get_family(family)
    control = control or BoostControl()
    mstop, _ = control.resolve(family)
    y = family.check_response(data[response])
    if weights is None:
        weights = np.ones(data.n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (data.n,) or np.any(weights < 0) or not np.sum(weights) > 0:
        raise ValueError("weights must be non-negative, one per observation, with a positive sum")
    specs = _normalize_formulas(formulas, family)
    learners = [[s if isinstance(s, Learner) else Learner.resolve(s, data) for s in ls]
                for ls in specs]
    covs = sorted({lr.spec.covariate for ls in learners for lr in ls
                   if lr.spec.covariate is not None})
    offsets = compute_offset(family, y, weights)
    model = BoostModel(family, learners, offsets, control, response=response, data=data,
                       weights=weights, covariates=covariate_summary(data, covs),
                       rescale=rescale)
    if control.trace and callback is None:
        callback = _TracePrinter(max(mstop))
    model._walk(mstop, callback)
    return model
