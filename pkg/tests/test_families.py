import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize, stats

from lssboost.families import (
    FAMILIES,
    Link,
    OffsetError,
    ResponseDomainError,
    compute_offset,
    get_family,
)

from oracles import fd_grad_eta, random_points

ALL = sorted(FAMILIES)


def test_catalog_contains_required_families():
    assert {"gaussian", "gamma", "negbin", "beta", "studentt"} <= set(FAMILIES)
    assert get_family("studentt").K == 3
    with pytest.raises(KeyError):
        get_family("weibull")


@pytest.mark.parametrize("kind,eta", [("identity", np.linspace(-50, 50, 11)),
                                      ("log", np.linspace(-30, 30, 11)),
                                      ("logit", np.linspace(-5, 5, 11))])
def test_link_roundtrip(kind, eta):
    link = Link(kind)
    assert np.allclose(link.inverse(link.forward(eta)), eta, atol=1e-12, rtol=1e-12)


def test_link_ranges():
    eta = np.linspace(-20, 20, 101)
    assert np.all(Link("log").forward(eta) > 0)
    p = Link("logit").forward(eta)
    assert np.all((p > 0) & (p < 1))


# -- gaussian ---------------------------------------------------------------

def test_gaussian_score_zero_at_mean():
    g = get_family("gaussian")
    assert g.grad_eta("mu", 0.0, 0.0, 1.0) == 0.0


@given(st.floats(-10, 10), st.floats(0.05, 20))
def test_gaussian_sigma_score_zero_one_sd_away(mu, sigma):
    g = get_family("gaussian")
    assert abs(g.grad_eta("sigma", mu + sigma, mu, sigma)) < 1e-9


def test_gaussian_mu_gradient_frozen_value():
    # FD of eta -> loglik at y=2, eta_mu=1, eta_sigma=log 2
    g = get_family("gaussian")
    fd = fd_grad_eta(g, 0, np.array([2.0]), [np.array([1.0]), np.array([2.0])])
    assert fd[0] == pytest.approx(0.25, abs=1e-8)
    assert g.grad_eta("mu", 2.0, 1.0, 2.0) == pytest.approx(0.25, abs=1e-12)


# -- gamma -------------------------------------------------------------------

def test_gamma_score_zero_at_mean():
    g = get_family("gamma")
    for sigma in (0.3, 1.0, 7.0):
        assert abs(g.grad_eta("mu", 2.5, 2.5, sigma)) < 1e-12


def test_gamma_sigma_gradient_matches_fd():
    g = get_family("gamma")
    y, th = np.array([1.3]), [np.array([2.0]), np.array([5.0])]
    fd = fd_grad_eta(g, 1, y, th)
    assert g.grad_eta(1, y, *th) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_gamma_moments_small_sample():
    g = get_family("gamma")
    m, v = g.mean_var(2.0, 5.0)
    assert m == pytest.approx(2.0)
    assert v == pytest.approx(0.8)


def test_gamma_rejects_nonpositive():
    with pytest.raises(ResponseDomainError):
        get_family("gamma").check_response([1.0, 0.0])


# -- negbin ------------------------------------------------------------------

def test_negbin_variance_formula():
    m, v = get_family("negbin").mean_var(3.0, 2.0)
    assert v == pytest.approx(7.5)


@given(st.floats(0.1, 30), st.floats(0.1, 30))
def test_negbin_zero_mass(mu, sigma):
    nb = get_family("negbin")
    assert nb.loglik(0.0, mu, sigma) == pytest.approx(sigma * np.log(sigma / (sigma + mu)), rel=1e-10)


def test_negbin_pmf_sums_to_one():
    nb = get_family("negbin")
    y = np.arange(0, 2000)
    assert np.exp(nb.loglik(y, 4.0, 1.5)).sum() == pytest.approx(1.0, abs=1e-10)


def test_negbin_score_zero_at_integer_mean():
    nb = get_family("negbin")
    assert abs(nb.grad_eta("mu", 4.0, 4.0, 2.5)) < 1e-12


@pytest.mark.parametrize("bad", [[-1.0], [1.5]])
def test_negbin_rejects_bad_counts(bad):
    with pytest.raises(ResponseDomainError):
        get_family("negbin").check_response(bad)


# -- beta --------------------------------------------------------------------

def test_beta_score_zero_at_half():
    b = get_family("beta")
    for phi in (0.5, 3.0, 40.0):
        assert abs(b.grad_eta("mu", 0.5, 0.5, phi)) < 1e-12


def test_beta_phi_gradient_matches_fd():
    b = get_family("beta")
    y, th = np.array([0.3]), [np.array([0.4]), np.array([2.0])]
    assert b.grad_eta(1, y, *th) == pytest.approx(fd_grad_eta(b, 1, y, th), rel=1e-6, abs=1e-8)


def test_beta_variance_formula():
    assert get_family("beta").mean_var(0.5, 3.0)[1] == pytest.approx(0.0625)


@pytest.mark.parametrize("bad", [[0.0], [1.0], [1.2]])
def test_beta_rejects_boundary(bad):
    with pytest.raises(ResponseDomainError):
        get_family("beta").check_response(bad)


# -- student t ---------------------------------------------------------------

def test_studentt_center_and_median():
    t = get_family("studentt")
    assert t.grad_eta("mu", 1.7, 1.7, 3.0, 5.0) == 0.0
    assert t.quantile(0.5, 1.7, 3.0, 5.0) == pytest.approx(1.7, abs=1e-12)


def test_studentt_all_gradients_match_fd():
    t = get_family("studentt")
    y, th = np.array([1.0]), [np.array([0.0]), np.array([1.0]), np.array([4.0])]
    for k in range(3):
        assert t.grad_eta(k, y, *th) == pytest.approx(fd_grad_eta(t, k, y, th), rel=1e-6, abs=1e-9)


def test_studentt_loglik_matches_scipy():
    t = get_family("studentt")
    y = np.linspace(-4, 6, 9)
    ref = stats.t.logpdf(y, 3.5, loc=1.0, scale=2.0)
    assert np.allclose(t.loglik(y, 1.0, 2.0, 3.5), ref, rtol=1e-12)


# -- shared properties ---------------------------------------------------------

@pytest.mark.parametrize("name", ALL)
def test_gradients_match_fd_random(name):
    fam = get_family(name)
    rng = np.random.default_rng(11)
    y, theta = random_points(fam, rng, 200)
    for k in range(fam.K):
        a = fam.grad_eta(k, y, *theta)
        fd = fd_grad_eta(fam, k, y, theta)
        assert np.all(np.abs(a - fd) <= 1e-6 * np.maximum(np.abs(a), 1.0))


@pytest.mark.parametrize("name", ALL)
def test_loglik_finite_and_quantile_monotone(name):
    fam = get_family(name)
    rng = np.random.default_rng(3)
    y, theta = random_points(fam, rng, 50)
    assert np.all(np.isfinite(fam.loglik(y, *theta)))
    p = np.linspace(0.01, 0.99, 25)[:, None]
    q = fam.quantile(p, *[t[None, :] for t in theta])
    assert np.all(np.diff(q, axis=0) >= 0)


@pytest.mark.parametrize("name", ["gaussian", "gamma", "beta", "studentt"])
def test_quantile_inverts_cdf(name):
    fam = get_family(name)
    y, theta = random_points(fam, np.random.default_rng(5), 40)
    assert np.allclose(fam.quantile(fam.cdf(y, *theta), *theta), y, atol=1e-8, rtol=1e-8)


# -- offsets -----------------------------------------------------------------

def test_gaussian_offset_closed_form():
    off = compute_offset("gaussian", np.array([-1.0, 0.0, 1.0]))
    assert off[0] == pytest.approx(0.0, abs=1e-15)
    assert off[1] == pytest.approx(np.log(np.sqrt(2 / 3)), abs=1e-15)


def test_gaussian_offset_constant_response_floors_sigma():
    with pytest.warns(RuntimeWarning):
        off = compute_offset("gaussian", np.full(5, 3.0))
    assert off[0] == pytest.approx(3.0, abs=1e-14)
    assert off[1] == pytest.approx(np.log(1e-10))


def test_gamma_offset_near_truth_and_mle():
    fam = get_family("gamma")
    y = fam.sample(np.random.default_rng(2), 2.0, 5.0, size=200)
    off = compute_offset(fam, y)
    assert np.all(np.abs(off - np.log([2.0, 5.0])) < 0.1)

    def nll(e):
        return -np.sum(fam.loglik(y, *fam.thetas(e)))

    ref = optimize.minimize(nll, np.zeros(2), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000}).x
    assert np.allclose(off, ref, atol=1e-4)


@pytest.mark.parametrize("name", ALL)
def test_offset_permutation_and_weight_scale_invariance(name):
    fam = get_family(name)
    rng = np.random.default_rng(8)
    y, _ = random_points(fam, rng, 150)
    y = y if name != "studentt" else rng.standard_t(5, 150)
    w = rng.uniform(0.5, 2.0, 150)
    base = compute_offset(fam, y, w)
    perm = rng.permutation(150)
    assert np.allclose(compute_offset(fam, y[perm], w[perm]), base, atol=1e-6)
    assert np.allclose(compute_offset(fam, y, 7.5 * w), base, atol=1e-6)


def test_offset_ignores_zero_weight_observations():
    y = np.array([1.0, 2.0, 3.0, 100.0])
    a = compute_offset("gamma", y, np.array([1, 1, 1, 0.0]))
    b = compute_offset("gamma", y[:3])
    assert np.allclose(a, b, atol=1e-7)


def test_offset_nonconvergence_raises():
    with pytest.raises(OffsetError):
        compute_offset("gamma", np.array([0.5, 1.0, 4.0]), max_cycles=1, tol=1e-300)


def test_offset_rejects_bad_weights():
    with pytest.raises(ValueError):
        compute_offset("gaussian", np.ones(3), np.zeros(3))
