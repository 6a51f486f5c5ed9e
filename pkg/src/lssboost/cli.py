"""Command-line interface.

Precedence for settings: command-line flag, then config file, then default.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import inference
from .boost import BoostModel, fit
from .config import ConfigError, ModelConfig, load_config, parse_factor
from .data import CATEGORICAL, Dataset, ingest
from .inference import write_table
from .simulate import load_spec, simulate
from .tuning import cv_risk, make_folds, make_grid, optimal_mstop

log = logging.getLogger("lssboost")


def _parse_per_param(text: str):
    """``500`` or ``mu=500,sigma=200``."""
    text = text.strip()
    if "=" not in text:
        return int(text)
    out = {}
    for part in text.split(","):
        k, v = part.split("=")
        out[k.strip()] = int(v)
    return out


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _config(args) -> ModelConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "rescale", None) is not None:
        cfg.rescale = parse_factor(args.rescale)
    if getattr(args, "mstop", None) is not None:
        cfg.control["mstop"] = _parse_per_param(args.mstop)
    return cfg


def load_training_data(cfg: ModelConfig, path) -> Dataset:
    """Ingest the used columns and apply the response rescale factor."""
    data = ingest(path, cfg.type_hints, used_columns=cfg.used_columns()).select(cfg.used_columns())
    if data.n_dropped:
        log.warning("dropped %d rows with missing values", data.n_dropped)
    if cfg.rescale != 1.0:
        data.columns[cfg.response] = data[cfg.response] * cfg.rescale
    return data


def _fit_from_config(cfg: ModelConfig, data: Dataset, control=None) -> BoostModel:
    model = fit(data, cfg.response, cfg.formulas(), cfg.family,
                control or cfg.boost_control(), rescale=cfg.rescale)
    model.meta["config"] = cfg.to_dict()
    return model


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _comment(model: BoostModel, **settings) -> str:
    extra = " ".join(f"{k}={v}" for k, v in settings.items())
    return f"model={model.fingerprint} family={model.family.name} mstop={model.mstop()} {extra}".strip()


def _write_fit_artifacts(model: BoostModel, out: Path, model_path: Path) -> None:
    model.save(model_path)
    risk = model.risk()
    write_table(out / "risk.csv", {"iteration": np.arange(1, len(risk) + 1), "risk": risk},
                _comment(model))
    steps, params, idx, names = [], [], [], []
    for i, u in enumerate(model.visible_history, 1):
        steps.append(i)
        params.append(model.param_names[u.parameter])
        idx.append(u.learner)
        names.append(model.learners[u.parameter][u.learner].name)
    write_table(out / "selected.csv", {"step": steps, "parameter": params,
                                       "learner_index": idx, "learner": names}, _comment(model))
    cols = {f"eta_{k}": v for k, v in model.fitted("link").items()}
    write_table(out / "fitted.csv", cols, _comment(model, type="link"))


def cmd_fit(args) -> int:
    cfg = _config(args)
    data = load_training_data(cfg, args.data)
    model = _fit_from_config(cfg, data)
    out = _out_dir(args)
    model_path = Path(args.model) if args.model else out / "model.json"
    _write_fit_artifacts(model, out, model_path)
    log.info("final risk %.10g, mstop %s", model.risk()[-1], model.mstop())
    return 0


def cmd_cv(args) -> int:
    cfg = _config(args)
    data = load_training_data(cfg, args.data)
    template = _fit_from_config(cfg, data)
    names = template.param_names
    gmax = _parse_per_param(args.grid_max)
    if isinstance(gmax, int):
        gmax = {n: gmax for n in names}
    if set(gmax) != set(names):
        raise ConfigError(f"--grid-max needs values for {list(names)}")
    grid = make_grid({n: gmax[n] for n in names}, min=args.grid_min,
                     length_out=args.grid_length, log_scale=not args.linear_grid,
                     dense_mu=not args.sparse)
    seed = cfg.seed if args.seed is None else args.seed
    folds = make_folds(data.n, B=args.folds, fraction=args.fraction, seed=seed)
    cvr = cv_risk(template, grid, folds, cores=args.cores)
    choice = optimal_mstop(cvr)
    out = _out_dir(args)
    cvr.to_csv(out / "cv_risk.csv")
    grid.to_csv(out / "grid.csv")
    folds.to_csv(out / "folds.csv")
    summary = {"mstop": choice.mstop, "mean_oob_risk": choice.risk,
               "at_boundary": choice.at_boundary, "boundary": list(choice.boundary),
               "failed_folds": [int(b) + 1 for b in np.flatnonzero(cvr.failed)],
               "seed": seed, "folds": folds.B, "grid_points": len(grid)}
    (out / "mstop.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    print(" ".join(names))
    print(" ".join(str(v) for v in choice.mstop.values()))
    if args.apply:
        template.subset(choice.as_tuple())
        template.meta["config"]["control"]["mstop"] = dict(choice.mstop)
        _write_fit_artifacts(template, out, Path(args.model) if args.model else out / "model.json")
    return 0


def _load_model(args, data_path=None) -> BoostModel:
    model = BoostModel.load(args.model)
    if data_path is None:
        return model
    cfg = ModelConfig.from_dict(model.meta["config"], base_dir=Path(args.model).parent)
    return BoostModel.load(args.model, load_training_data(cfg, data_path))


def _newdata(model: BoostModel, path) -> Dataset:
    hints = {k: CATEGORICAL for k, v in model.covariates.items() if v["type"] == CATEGORICAL}
    cols = list(model.covariates)
    return ingest(path, hints, used_columns=cols).select(cols)


def cmd_predict(args) -> int:
    model = _load_model(args)
    newdata = _newdata(model, args.data)
    pred = model.predict(newdata, parameters=args.parameter, type=args.type,
                         which=_selector(args.which))
    cols = {}
    for name, v in pred.items():
        if args.type == "response" and args.which is None and name in model.family.y_scaled_params:
            v = v / model.rescale
        cols[f"{args.type}_{name}"] = v
    write_table(args.out, cols, _comment(model, type=args.type))
    return 0


def cmd_predint(args) -> int:
    model = _load_model(args)
    tab = inference.predint(model, args.which, _floats(args.pi), args.grid_points)
    if not tab.is_nested():
        log.error("prediction intervals are not nested")
        return 1
    write_table(args.out, tab.columns(model.rescale),
                _comment(model, pi=args.pi, fixed=json.dumps(tab.fixed, sort_keys=True)))
    return 0


def _selector(text):
    if text is None:
        return None
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return [int(p) if p.lstrip("-").isdigit() else p for p in parts]


def cmd_partials(args) -> int:
    model = _load_model(args)
    tables = inference.partial_effects(model, args.parameter, _selector(args.which),
                                       args.grid_points)
    out = _out_dir(args)
    for t in tables:
        safe = t.learner.replace("(", "_").replace(")", "")
        write_table(out / f"partial_{t.parameter}_{safe}.csv",
                    {t.covariate: t.grid, "effect": t.effect},
                    _comment(model, parameter=t.parameter, learner=t.learner,
                             selected=t.selected))
    return 0


def cmd_region_summary(args) -> int:
    model = _load_model(args, args.data)
    res = inference.region_summary(model, args.region, args.parameter,
                                   response=args.response_scale, agg=args.agg)
    out = _out_dir(args)
    for r in res:
        write_table(out / f"region_{r.parameter}_{args.region}.csv",
                    {"region": r.regions, "value": r.values, "n": r.counts},
                    _comment(model, parameter=r.parameter, learner=r.learner, scale=r.scale))
    return 0


def cmd_simulate(args) -> int:
    spec = load_spec(args.spec)
    data, truth = simulate(spec, args.n, args.seed, response=args.response)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(out)
    write_table(out.with_suffix(".truth.csv"), {f"true_{k}": v for k, v in truth.items()})
    return 0


def cmd_summary(args) -> int:
    model = _load_model(args)
    print(f"family: {model.family.name}")
    print(f"mstop: {model.mstop()}")
    print(f"offsets: {model.offsets_dict()}")
    risk = model.risk()
    if risk.size:
        print(f"final risk: {risk[-1]:.10g}")
    for name, sel in model.selected().items():
        counts = np.bincount(sel, minlength=len(model.learners[model.family.index(name)]))
        print(f"selection frequencies for {name}:")
        for lr, c in zip(model.learners[model.family.index(name)], counts):
            print(f"  {lr.name:<30s} {c / max(len(sel), 1):.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lssboost", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, data=False, model=False, out_dir=False, out=False):
        if config:
            sp.add_argument("--config", required=True)
        if data:
            sp.add_argument("--data", required=data == "required")
        if model:
            sp.add_argument("--model", required=model == "required")
        if out_dir:
            sp.add_argument("--out-dir", required=True)
        if out:
            sp.add_argument("--out", required=True)

    sp = sub.add_parser("fit", help="fit a model")
    common(sp, config=True, data="required", model=True, out_dir=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--rescale")
    sp.add_argument("--mstop", help="e.g. 100 or mu=193,sigma=41")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("cv", help="subsampling cross-validation of mstop")
    common(sp, config=True, data="required", model=True, out_dir=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--rescale")
    sp.add_argument("--mstop")
    sp.add_argument("--cores", type=int, default=1)
    sp.add_argument("--grid-max", default="500")
    sp.add_argument("--grid-min", type=int, default=20)
    sp.add_argument("--grid-length", type=int, default=10)
    sp.add_argument("--linear-grid", action="store_true")
    sp.add_argument("--sparse", action="store_true", help="no dense mu grid")
    sp.add_argument("--folds", type=int, default=25)
    sp.add_argument("--fraction", type=float, default=0.5)
    sp.add_argument("--apply", action="store_true", help="write a model at the optimum")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("predict", help="predict distribution parameters")
    common(sp, data="required", model="required", out=True)
    sp.add_argument("--type", choices=("link", "response"), default="response")
    sp.add_argument("--parameter", action="append")
    sp.add_argument("--which")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("predint", help="marginal prediction intervals")
    common(sp, model="required", out=True)
    sp.add_argument("--which", required=True, help="continuous covariate")
    sp.add_argument("--pi", default="0.8,0.9")
    sp.add_argument("--grid-points", type=int, default=150)
    sp.set_defaults(func=cmd_predint)

    sp = sub.add_parser("partials", help="partial effect tables")
    common(sp, model="required", out_dir=True)
    sp.add_argument("--which", help="learner indices or name substrings, comma separated")
    sp.add_argument("--parameter", action="append")
    sp.add_argument("--grid-points", type=int, default=150)
    sp.set_defaults(func=cmd_partials)

    sp = sub.add_parser("region-summary", help="per-region aggregated effects")
    common(sp, data=True, model="required", out_dir=True)
    sp.add_argument("--region", required=True)
    sp.add_argument("--parameter", action="append")
    sp.add_argument("--response-scale", action="store_true")
    sp.add_argument("--agg", choices=("mean", "median"), default="mean")
    sp.set_defaults(func=cmd_region_summary)

    sp = sub.add_parser("simulate", help="generate synthetic data")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--response", default="y")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("summary", help="print a model summary")
    common(sp, model="required")
    sp.set_defaults(func=cmd_summary)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
