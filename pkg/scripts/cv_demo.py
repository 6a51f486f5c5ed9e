"""End-to-end run on synthetic data through the command line interface.

Simulates a dataset, fits the model in ``configs/model.yaml``, tunes the
stopping iterations by subsampling, applies the optimum and exports
prediction intervals, partial effects and region summaries.

    python scripts/cv_demo.py --out-dir demo_out --cores 4
"""

import argparse
from pathlib import Path

from lssboost.cli import main as cli

HERE = Path(__file__).resolve().parent


def run(*argv):
    print("$ lssboost", " ".join(argv))
    status = cli(list(argv))
    if status != 0:
        raise SystemExit(status)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", default="demo_out")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--cores", type=int, default=1)
    args = p.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = str(HERE / "configs" / "model.yaml")
    data = str(out / "data.csv")
    model = str(out / "cv" / "model.json")

    run("simulate", "--spec", str(HERE / "configs" / "generator.yaml"), "--n", str(args.n),
        "--seed", "1907", "--out", data)
    run("fit", "--config", cfg, "--data", data, "--out-dir", str(out / "fit"))
    run("cv", "--config", cfg, "--data", data, "--out-dir", str(out / "cv"),
        "--grid-min", "1", "--grid-max", "mu=200,sigma=100", "--folds", str(args.folds),
        "--cores", str(args.cores), "--apply")
    run("summary", "--model", model)
    run("predint", "--model", model, "--which", "age", "--out", str(out / "predint_age.csv"))
    run("partials", "--model", model, "--which", "pspline", "--out-dir", str(out / "partials"))
    run("region-summary", "--model", model, "--data", data, "--region", "region",
        "--out-dir", str(out / "regions"))


if __name__ == "__main__":
    main()
