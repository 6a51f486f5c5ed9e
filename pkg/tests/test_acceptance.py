"""Acceptance gate: one check per primary criterion, each reported as a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lssboost.boost import BoostControl, deserialize, fit, serialize, stabilize  # noqa: E402
from lssboost.data import Dataset  # noqa: E402
from lssboost.families import FAMILIES, get_family  # noqa: E402
from lssboost.inference import predint  # noqa: E402
from lssboost.learners import BaseLearnerSpec  # noqa: E402
from lssboost.simulate import simulate  # noqa: E402
from lssboost.tuning import StopGrid, cv_risk, grid_axis, make_folds, make_grid  # noqa: E402

from oracles import (  # noqa: E402
    aggregate_linear,
    fd_grad_eta,
    joint_gaussian_mle,
    linear_lss_data,
    random_points,
)

LIN2 = [BaseLearnerSpec("linear", "x1"), BaseLearnerSpec("linear", "x2")]


def _mad(v):
    return float(np.median(np.abs(v - np.median(v))))


def crit_gradients():
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(20240501)
    for name in sorted(FAMILIES):
        fam = get_family(name)
        y, theta = random_points(fam, rng, 1000)
        for k in range(fam.K):
            a = fam.grad_eta(k, y, *theta)
            fd = fd_grad_eta(fam, k, y, theta)
            worst = max(worst, float(np.max(np.abs(a - fd) / np.maximum(np.abs(a), 1.0))))
    dt = time.perf_counter() - t0
    return worst <= 1e-6 and dt < 30, f"max rel. error {worst:.2e}, {dt:.1f}s"


def crit_variances():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1907)
    n = 1_000_000
    cases = [("gamma", (2.0, 5.0), 2.0 ** 2 / 5.0),
             ("negbin", (3.0, 2.0), 3.0 + 3.0 ** 2 / 2.0),
             ("beta", (0.5, 3.0), 0.5 * 0.5 / 4.0)]
    worst, parts = 0.0, []
    for name, theta, var in cases:
        y = get_family(name).sample(rng, *theta, size=n)
        c = y - y.mean()
        s2 = float(np.mean(c ** 2))
        se = np.sqrt((np.mean(c ** 4) - s2 ** 2) / n)
        z = abs(s2 * n / (n - 1) - var) / se
        zm = abs(y.mean() - theta[0]) / (np.sqrt(var / n))
        worst = max(worst, z, zm)
        parts.append(f"{name} var {s2:.4f} vs {var:.4f}")
    dt = time.perf_counter() - t0
    return worst < 3 and dt < 60, f"{'; '.join(parts)}; max |z| {worst:.2f}, {dt:.1f}s"


def crit_convergence():
    t0 = time.perf_counter()
    data = linear_lss_data(42, n=500)
    m = fit(data, "y", LIN2, control=BoostControl(mstop=5000, nu=0.1))
    X = np.column_stack([np.ones(data.n), data["x1"], data["x2"]])
    ref = joint_gaussian_mle(data["y"], X, X)
    got = np.r_[aggregate_linear(m, "mu"), aggregate_linear(m, "sigma")]
    dev = float(np.max(np.abs(got - ref)))
    dt = time.perf_counter() - t0
    return dev < 1e-2 and dt < 120, f"max |boost - MLE| {dev:.2e}, {dt:.1f}s"


def selection_replication(seed, n=400, n_noise=10, mstop=60):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2 + n_noise))
    y = rng.normal(X[:, 0] + X[:, 1], np.exp(0.5 * X[:, 0] - 0.5 * X[:, 1]))
    cols = {f"x{j + 1}": X[:, j] for j in range(X.shape[1])}
    cols["y"] = y
    specs = [BaseLearnerSpec("linear", f"x{j + 1}") for j in range(X.shape[1])]
    m = fit(Dataset.from_dict(cols), "y", specs, control=BoostControl(mstop=mstop))
    ok = True
    for sel in m.selected().values():
        first_noise = next((i for i, j in enumerate(sel) if j >= 2), len(sel))
        # both informative learners must enter before any noise learner
        ok &= {0, 1} <= set(sel[:first_noise])
    return ok


def crit_selection():
    t0 = time.perf_counter()
    hits = sum(selection_replication(seed) for seed in range(100))
    dt = time.perf_counter() - t0
    return hits >= 95 and dt < 300, f"{hits}/100 replications, {dt:.1f}s"


MONO_COV = {"x1": {"dist": "uniform", "low": -1, "high": 1},
            "x2": {"dist": "uniform", "low": -1, "high": 1}}
MONO_ETA = {
    "gaussian": {"mu": {"intercept": 1, "smooth": {"x1": "sin"}}, "sigma": {"linear": {"x2": 0.5}}},
    "gamma": {"mu": {"intercept": 1, "linear": {"x1": 0.5}},
              "sigma": {"intercept": 1, "linear": {"x2": 0.5}}},
    "negbin": {"mu": {"intercept": 1.5, "smooth": {"x1": "sin"}},
               "sigma": {"intercept": 0.5, "linear": {"x2": 0.5}}},
    "beta": {"mu": {"linear": {"x1": 1.0}}, "phi": {"intercept": 2, "linear": {"x2": 0.5}}},
    "studentt": {"mu": {"smooth": {"x1": "sin"}}, "sigma": {"linear": {"x2": 0.3}},
                 "df": {"intercept": 1.5}},
}
MONO_LEARNERS = [BaseLearnerSpec("pspline", "x1"), BaseLearnerSpec("pspline", "x2"),
                 BaseLearnerSpec("linear", "x1"), BaseLearnerSpec("linear", "x2")]


def crit_monotone():
    worst, parts = -np.inf, []
    for name, eta in MONO_ETA.items():
        d, _ = simulate({"family": name, "covariates": MONO_COV, "eta": eta}, 300, seed=11)
        m = fit(d, "y", MONO_LEARNERS, family=name, control=BoostControl(mstop=500))
        step = float(np.max(np.diff(m.risk())))
        worst = max(worst, step)
        parts.append(f"{name} {step:.1e}")
    return worst <= 1e-8, "largest step change: " + ", ".join(parts)


def crit_mad():
    rng = np.random.default_rng(5)
    n = 400
    x = rng.uniform(-1, 1, n)
    y = rng.normal(2 * x, np.exp(x))
    d = Dataset.from_dict({"y": y, "x": x})
    specs = [BaseLearnerSpec("pspline", "x")]
    plain = fit(d, "y", specs, control=BoostControl(mstop=100))
    mad = fit(d, "y", specs, control=BoostControl(mstop=100, stabilization="mad"))
    fam = get_family("gaussian")
    worst = 0.0
    for mstop in (1, 10, 50, 100):
        theta = fam.thetas(mad.subset(mstop).eta)
        for k in range(2):
            worst = max(worst, abs(_mad(stabilize(fam.grad_eta(k, y, *theta), "mad")) - 1.0))
    distinct = not np.array_equal(plain.risk(), mad.risk())
    gap = float(np.max(np.abs(plain.risk() - mad.risk())))
    return worst <= 1e-12 and distinct, f"max |MAD - 1| {worst:.1e}; max trace gap {gap:.3g}"


def crit_grid():
    axis = grid_axis(20, 500, 10).tolist()
    expect = np.floor(np.exp(np.linspace(np.log(20), np.log(500), 10)) + 0.5).astype(int).tolist()
    ok_axis = axis == expect == [20, 29, 41, 58, 84, 120, 171, 245, 350, 500]
    dense = make_grid({"mu": 500, "sigma": 500}, min=20, length_out=10)
    ok_dense = all((m, s) in dense for s in axis for m in range(s, 501))
    ok_point = (193, 41) in dense
    return ok_axis and ok_dense and ok_point, (
        f"axis {axis}; dense rows complete: {ok_dense}; (193, 41) in grid: {ok_point}; "
        f"{len(dense)} points")


def _cv_template():
    return fit(linear_lss_data(8, n=150), "y", LIN2, control=BoostControl(mstop=10))


def crit_cv():
    tpl = _cv_template()
    folds = make_folds(tpl.data.n, B=4, seed=1907)
    grid = make_grid({"mu": 60, "sigma": 60}, min=5, length_out=5)
    serial = cv_risk(tpl, grid, folds, cores=1)
    parallel = cv_risk(tpl, grid, folds, cores=4)
    same = np.array_equal(serial.risk, parallel.risk)

    small = make_grid({"mu": 40, "sigma": 40}, min=5, length_out=4, dense_mu=False)
    sub = cv_risk(tpl, small, folds)
    idx = {p: i for i, p in enumerate(grid)}
    shared = [(i, idx[p]) for i, p in enumerate(small) if p in idx]
    nested = bool(shared) and all(np.array_equal(sub.risk[:, i], serial.risk[:, j]) for i, j in shared)

    point = (17, 9)
    single = cv_risk(tpl, StopGrid.from_points([point], ("mu", "sigma")), folds)
    fam = get_family("gaussian")
    dev = 0.0
    for b in range(folds.B):
        w = folds.weights[:, b]
        m = fit(tpl.data, "y", LIN2, control=BoostControl(mstop=point), weights=w)
        oob = w == 0
        ref = -np.mean(fam.loglik(tpl.data["y"][oob], *fam.thetas([e[oob] for e in m.eta])))
        dev = max(dev, abs(single.risk[b, 0] - ref))
    return same and nested and dev < 1e-10, (
        f"serial == 4-core: {same}; {len(shared)} shared nested points identical: {nested}; "
        f"single-point vs refit {dev:.1e}")


def crit_subset():
    d, _ = simulate({"family": "gaussian", "covariates": MONO_COV, "eta": MONO_ETA["gaussian"]},
                    300, seed=4)
    m = fit(d, "y", MONO_LEARNERS, control=BoostControl(mstop=(60, 45)))
    orig = m.predict()
    m.subset((10, 20))
    fresh = fit(d, "y", MONO_LEARNERS, control=BoostControl(mstop=(10, 20)))
    exact = all(np.array_equal(m.predict()[k], fresh.predict()[k]) for k in orig)
    m.subset((60, 45))
    back = m.predict()
    dev = max(float(np.max(np.abs(back[k] - orig[k]))) for k in orig)
    return exact and dev < 1e-12, f"subset == fresh fit: {exact}; down/up deviation {dev:.1e}"


def crit_predint():
    rng = np.random.default_rng(77)
    n = 2000
    x = rng.uniform(0, 2, n)

    def mu(v):
        return 1 + 1.5 * v

    def sigma(v):
        return np.exp(-0.5 + 0.6 * v)

    d = Dataset.from_dict({"y": rng.normal(mu(x), sigma(x)), "x": x})
    m = fit(d, "y", [BaseLearnerSpec("linear", "x")], control=BoostControl(mstop=1500))
    tab = predint(m, "x", pi=(0.8, 0.9), grid_points=10_000)
    mh, sh = tab.params["mu"], tab.params["sigma"]
    formula = max(
        float(np.max(np.abs(tab.bounds[0.8][0] - (mh - 1.281552 * sh)))),
        float(np.max(np.abs(tab.bounds[0.8][1] - (mh + 1.281552 * sh)))),
        float(np.max(np.abs(tab.bounds[0.9][0] - (mh - 1.644854 * sh)))),
        float(np.max(np.abs(tab.bounds[0.9][1] - (mh + 1.644854 * sh)))),
    ) / float(np.max(sh))
    y_new = rng.normal(mu(tab.grid), sigma(tab.grid))
    cov = {p: float(np.mean((tab.bounds[p][0] <= y_new) & (y_new <= tab.bounds[p][1])))
           for p in (0.8, 0.9)}
    ok = formula < 1e-6 and all(abs(cov[p] - p) <= 0.03 for p in cov)
    return ok, (f"max |bound - (mu +- z sigma)| / sigma {formula:.1e}; "
                f"coverage 80%: {cov[0.8]:.4f}, 90%: {cov[0.9]:.4f}")


def crit_serialization():
    d, _ = simulate({"family": "gamma", "covariates": MONO_COV, "eta": MONO_ETA["gamma"]},
                    250, seed=6)
    m = fit(d, "y", MONO_LEARNERS, family="gamma", control=BoostControl(mstop=(40, 25)))
    newdata = d.select(["x1", "x2"])
    back = deserialize(serialize(m))
    bitwise = all(np.array_equal(back.predict(newdata)[k], m.predict(newdata)[k])
                  for k in m.param_names)
    cont = deserialize(serialize(m), data=d).subset((90, 70))
    ref = fit(d, "y", MONO_LEARNERS, family="gamma", control=BoostControl(mstop=(90, 70)))
    same = np.array_equal(cont.eta, ref.eta) and np.array_equal(cont.risk(), ref.risk())
    return bitwise and same, f"round-trip bitwise: {bitwise}; continue-after-reload identical: {same}"


CRITERIA = [
    ("gradient correctness", crit_gradients),
    ("variance parametrizations", crit_variances),
    ("convergence equivalence", crit_convergence),
    ("variable selection", crit_selection),
    ("risk monotonicity", crit_monotone),
    ("MAD stabilization", crit_mad),
    ("grid construction", crit_grid),
    ("CV determinism and path correctness", crit_cv),
    ("subset/replay", crit_subset),
    ("prediction intervals", crit_predint),
    ("serialization", crit_serialization),
]


def report(name, func):
    ok, detail = func()
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    return ok, line


@pytest.mark.parametrize("name,func", CRITERIA, ids=[c[0].replace(" ", "_") for c in CRITERIA])
def test_criterion(name, func, capsys):
    ok, line = report(name, func)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [report(name, func) for name, func in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
