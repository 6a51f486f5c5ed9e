"""Variable selection under early stopping.

Two informative predictors enter both the mean and the log standard
deviation; the rest is noise.  Counts the replications in which both
informative linear learners are picked before any noise learner, per
parameter.

    python scripts/selection_experiment.py --reps 100
"""

import argparse
import time

import numpy as np

from lssboost import BaseLearnerSpec, BoostControl, Dataset, fit


def replicate(seed, n, n_noise, mstop):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2 + n_noise))
    y = rng.normal(X[:, 0] + X[:, 1], np.exp(0.5 * X[:, 0] - 0.5 * X[:, 1]))
    cols = {f"x{j + 1}": X[:, j] for j in range(X.shape[1])}
    cols["y"] = y
    specs = [BaseLearnerSpec("linear", f"x{j + 1}") for j in range(X.shape[1])]
    model = fit(Dataset.from_dict(cols), "y", specs, control=BoostControl(mstop=mstop))
    out = {}
    for name, sel in model.selected().items():
        first_noise = next((i for i, j in enumerate(sel) if j >= 2), len(sel))
        out[name] = {0, 1} <= set(sel[:first_noise])
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--noise", type=int, default=10)
    p.add_argument("--mstop", type=int, default=60)
    args = p.parse_args()

    t0 = time.perf_counter()
    results = [replicate(s, args.n, args.noise, args.mstop) for s in range(args.reps)]
    for name in ("mu", "sigma"):
        print(f"{name:6s} informative first: {sum(r[name] for r in results)}/{args.reps}")
    print(f"both   informative first: {sum(all(r.values()) for r in results)}/{args.reps}")
    print(f"elapsed {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
