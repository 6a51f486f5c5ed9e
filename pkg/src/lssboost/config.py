"""YAML model configuration.

Example::

    family: gaussian
    response: y
    rescale: 1/600          # multiplies the response before fitting
    seed: 1907
    type_hints: {district: categorical}
    adjacency: districts.csv   # default graph for mrf terms
    control:
      mstop: {mu: 193, sigma: 41}
      nu: 0.1
      stabilization: none
      trace: false
    formula:                   # one list for all parameters ...
      - {kind: pspline, covariate: age}
      - {kind: mrf, covariate: district}
    # ... or a mapping  formula: {mu: [...], sigma: [...]}

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

from .boost import BoostControl
from .learners import BaseLearnerSpec, MRFGraph

TERM_KEYS = {"kind", "covariate", "intercept", "knots", "degree", "diff_order", "df", "adjacency"}


class ConfigError(ValueError):
    pass


def parse_factor(value) -> float:
    """Number or fraction string such as ``1/600``."""
    if isinstance(value, (int, float)):
        out = float(value)
    else:
        try:
            out = float(Fraction(str(value).strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse rescale factor {value!r}") from exc
    if not out > 0:
        raise ConfigError("rescale factor must be positive")
    return out


@dataclass
class ModelConfig:
    family: str
    response: str
    formula: Any
    control: dict = field(default_factory=dict)
    rescale: float = 1.0
    seed: int | None = None
    type_hints: dict = field(default_factory=dict)
    adjacency: str | None = None
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "ModelConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - {"family", "response", "formula", "control", "rescale", "seed",
                            "type_hints", "adjacency"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("family", "response", "formula"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        return cls(family=str(d["family"]), response=str(d["response"]), formula=d["formula"],
                   control=dict(d.get("control") or {}),
                   rescale=parse_factor(d.get("rescale", 1.0)),
                   seed=d.get("seed"), type_hints=dict(d.get("type_hints") or {}),
                   adjacency=d.get("adjacency"),
                   base_dir=Path(base_dir) if base_dir is not None else Path.cwd())

    def to_dict(self) -> dict:
        return {"family": self.family, "response": self.response, "rescale": self.rescale,
                "seed": self.seed, "type_hints": dict(self.type_hints),
                "adjacency": self.adjacency, "control": dict(self.control),
                "formula": self.formula}

    def _path(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def boost_control(self) -> BoostControl:
        c = self.control
        unknown = set(c) - {"mstop", "nu", "trace", "stabilization"}
        if unknown:
            raise ConfigError(f"unknown control keys: {sorted(unknown)}")
        return BoostControl(mstop=c.get("mstop", 100), nu=c.get("nu", 0.1),
                            trace=bool(c.get("trace", False)),
                            stabilization=str(c.get("stabilization", "none")))

    def _term(self, t, graphs: dict) -> BaseLearnerSpec:
        if not isinstance(t, dict):
            raise ConfigError(f"formula term must be a mapping, got {t!r}")
        unknown = set(t) - TERM_KEYS
        if unknown:
            raise ConfigError(f"unknown term keys {sorted(unknown)} in {t}")
        t = dict(t)
        adj = t.pop("adjacency", None)
        if t.get("kind") == "mrf":
            src = adj or self.adjacency
            if src is None:
                raise ConfigError(f"mrf term on {t.get('covariate')!r} needs an adjacency file")
            if src not in graphs:
                graphs[src] = MRFGraph.read(self._path(src))
            t["graph"] = graphs[src]
        try:
            return BaseLearnerSpec(**t)
        except TypeError as exc:
            raise ConfigError(f"bad term {t}: {exc}") from exc

    def formulas(self):
        graphs: dict = {}
        f = self.formula
        if isinstance(f, dict):
            return {str(k): [self._term(t, graphs) for t in v] for k, v in f.items()}
        if isinstance(f, list):
            return [self._term(t, graphs) for t in f]
        raise ConfigError("formula must be a list of terms or a mapping of parameter to terms")

    def covariates(self) -> list[str]:
        f = self.formula
        terms = [t for v in f.values() for t in v] if isinstance(f, dict) else list(f)
        out = []
        for t in terms:
            c = t.get("covariate") if isinstance(t, dict) else None
            if c is not None and c not in out:
                out.append(c)
        return out

    def used_columns(self) -> list[str]:
        return [self.response] + [c for c in self.covariates() if c != self.response]


def load_config(path: str | Path) -> ModelConfig:
    path = Path(path)
    try:
        d = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ModelConfig.from_dict(d, base_dir=path.parent)
