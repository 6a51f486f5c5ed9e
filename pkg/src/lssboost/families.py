"""Distribution families for boosted distributional regression.

Each family bundles K parameters with their link functions, the
log-likelihood, analytic derivatives of the log-likelihood with respect to
every additive predictor, a quantile function and a sampler.  All
evaluation methods are vectorized over observations and never modify
their inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special, stats

__all__ = [
    "Link",
    "Family",
    "GaussianFamily",
    "GammaFamily",
    "NegBinFamily",
    "BetaFamily",
    "StudentTFamily",
    "FAMILIES",
    "get_family",
    "gaussian_family",
    "gamma_family",
    "negbin_family",
    "beta_family",
    "studentt_family",
    "compute_offset",
    "ResponseDomainError",
    "OffsetError",
]


class ResponseDomainError(ValueError):
    """Response values outside the support of the family."""


class OffsetError(RuntimeError):
    """Coordinate-wise offset maximization did not converge."""


@dataclass(frozen=True)
class Link:
    """A link function.

    ``forward`` maps the additive predictor to the parameter scale
    (the inverse link in GLM terms), ``inverse`` maps back.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("identity", "log", "logit"):
            raise ValueError(f"unknown link {self.kind!r}")

    def forward(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == "identity":
            return eta
        if self.kind == "log":
            return np.exp(eta)
        return special.expit(eta)

    def inverse(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return theta
        if self.kind == "log":
            return np.log(theta)
        return special.logit(theta)

    def dtheta_deta(self, theta):
        """Derivative of ``forward`` expressed through theta."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return np.ones_like(theta)
        if self.kind == "log":
            return theta
        return theta * (1.0 - theta)


IDENTITY = Link("identity")
LOG = Link("log")
LOGIT = Link("logit")


class Family:
    """Base class for K-parameter distribution families.

    Subclasses define ``name``, ``param_names``, ``links``, ``_loglik``,
    ``_dtheta`` (derivative of the log-likelihood with respect to the
    parameter on its natural scale) and ``_frozen`` (a scipy frozen
    distribution used for quantiles, cdf and sampling).
    """

    name: str = ""
    param_names: tuple[str, ...] = ()
    links: tuple[Link, ...] = ()
    # parameters measured in units of y; rescaling y rescales these
    y_scaled_params: tuple[str, ...] = ()

    @property
    def K(self) -> int:
        return len(self.param_names)

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))

    # -- domain -----------------------------------------------------------
    def check_response(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ResponseDomainError(f"{self.name}: response contains non-finite values")
        bad = ~self._in_domain(y)
        if np.any(bad):
            idx = int(np.flatnonzero(bad)[0])
            raise ResponseDomainError(
                f"{self.name}: response value {y[idx]!r} at position {idx} is outside "
                f"the support ({self.response_domain})"
            )
        return y

    response_domain = "real line"

    def _in_domain(self, y):
        return np.ones(y.shape, dtype=bool)

    def index(self, param: str | int) -> int:
        if isinstance(param, (int, np.integer)):
            if not 0 <= param < self.K:
                raise IndexError(f"{self.name} has no parameter {param}")
            return int(param)
        try:
            return self.param_names.index(param)
        except ValueError:
            raise KeyError(f"{self.name} has no parameter {param!r}; "
                           f"choose from {self.param_names}") from None

    # -- evaluation -------------------------------------------------------
    def thetas(self, etas: Sequence) -> list[np.ndarray]:
        return [link.forward(eta) for link, eta in zip(self.links, etas)]

    def loglik(self, y, *theta) -> np.ndarray:
        y = self.check_response(y)
        return self._loglik(y, *[np.asarray(t, dtype=float) for t in theta])

    def grad_eta(self, k: int | str, y, *theta) -> np.ndarray:
        """Derivative of the log-likelihood with respect to eta_k."""
        k = self.index(k)
        y = self.check_response(y)
        theta = [np.asarray(t, dtype=float) for t in theta]
        return self._dtheta(k, y, *theta) * self.links[k].dtheta_deta(theta[k])

    def nll(self, y, etas, weights=None) -> float:
        """Weighted negative log-likelihood summed over observations."""
        ll = self.loglik(y, *self.thetas(etas))
        if weights is None:
            return float(-np.sum(ll))
        weights = np.asarray(weights, dtype=float)
        pos = weights > 0
        return float(-np.sum(weights[pos] * ll[pos]))

    def quantile(self, p, *theta) -> np.ndarray:
        return self._frozen(*theta).ppf(p)

    def cdf(self, y, *theta) -> np.ndarray:
        return self._frozen(*theta).cdf(y)

    def mean_var(self, *theta) -> tuple[np.ndarray, np.ndarray]:
        d = self._frozen(*theta)
        return d.mean(), d.var()

    def sample(self, rng: np.random.Generator, *theta, size=None) -> np.ndarray:
        """Draw by inversion of the quantile function."""
        if size is None:
            size = np.broadcast(*[np.asarray(t) for t in theta]).shape
        u = rng.uniform(size=size)
        return np.asarray(self.quantile(u, *theta), dtype=float)

    def start_values(self, y, weights) -> list[float]:
        """Crude starting point (parameter scale) for offset search."""
        raise NotImplementedError

    def _loglik(self, y, *theta):
        raise NotImplementedError

    def _dtheta(self, k, y, *theta):
        raise NotImplementedError

    def _frozen(self, *theta):
        raise NotImplementedError


def _wmean(x, w):
    return float(np.sum(w * x) / np.sum(w))


def _wvar(x, w):
    m = _wmean(x, w)
    return float(np.sum(w * (x - m) ** 2) / np.sum(w))


class GaussianFamily(Family):
    name = "gaussian"
    param_names = ("mu", "sigma")
    links = (IDENTITY, LOG)
    y_scaled_params = ("mu", "sigma")

    def _loglik(self, y, mu, sigma):
        z = (y - mu) / sigma
        return -np.log(sigma) - 0.5 * np.log(2 * np.pi) - 0.5 * z * z

    def _dtheta(self, k, y, mu, sigma):
        if k == 0:
            return (y - mu) / sigma**2
        return -1.0 / sigma + (y - mu) ** 2 / sigma**3

    def _frozen(self, mu, sigma):
        return stats.norm(loc=mu, scale=sigma)

    def start_values(self, y, weights):
        return [_wmean(y, weights), max(np.sqrt(_wvar(y, weights)), 1e-10)]


class GammaFamily(Family):
    """Gamma with mean ``mu`` and shape ``sigma``: Var(y) = mu^2 / sigma."""

    name = "gamma"
    param_names = ("mu", "sigma")
    links = (LOG, LOG)
    y_scaled_params = ("mu",)
    response_domain = "y > 0"

    def _in_domain(self, y):
        return y > 0

    def _loglik(self, y, mu, sigma):
        return (sigma * np.log(sigma) - sigma * np.log(mu) + (sigma - 1) * np.log(y)
                - y * sigma / mu - special.gammaln(sigma))

    def _dtheta(self, k, y, mu, sigma):
        if k == 0:
            return sigma * (y - mu) / mu**2
        return np.log(sigma) + 1 - np.log(mu) + np.log(y) - y / mu - special.digamma(sigma)

    def _frozen(self, mu, sigma):
        return stats.gamma(a=sigma, scale=np.asarray(mu) / np.asarray(sigma))

    def start_values(self, y, weights):
        m = _wmean(y, weights)
        v = _wvar(y, weights)
        return [m, m * m / v if v > 0 else 1.0]


class NegBinFamily(Family):
    """Negative binomial with mean ``mu`` and size ``sigma``: Var(y) = mu + mu^2 / sigma."""

    name = "negbin"
    param_names = ("mu", "sigma")
    links = (LOG, LOG)
    response_domain = "y in {0, 1, 2, ...}"

    def _in_domain(self, y):
        return (y >= 0) & (y == np.floor(y))

    def _loglik(self, y, mu, sigma):
        return (special.gammaln(y + sigma) - special.gammaln(sigma) - special.gammaln(y + 1)
                + sigma * np.log(sigma / (sigma + mu)) + special.xlogy(y, mu / (sigma + mu)))

    def _dtheta(self, k, y, mu, sigma):
        if k == 0:
            return y / mu - (y + sigma) / (sigma + mu)
        return (special.digamma(y + sigma) - special.digamma(sigma) + np.log(sigma)
                + 1 - np.log(sigma + mu) - (y + sigma) / (sigma + mu))

    def _frozen(self, mu, sigma):
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        return stats.nbinom(n=sigma, p=sigma / (sigma + mu))

    def start_values(self, y, weights):
        m = _wmean(y, weights)
        v = _wvar(y, weights)
        size = m * m / (v - m) if v > m else 100.0
        return [max(m, 1e-3), size]


class BetaFamily(Family):
    """Beta with mean ``mu`` and precision ``phi``: Var(y) = mu (1 - mu) / (1 + phi)."""

    name = "beta"
    param_names = ("mu", "phi")
    links = (LOGIT, LOG)
    response_domain = "0 < y < 1"

    def _in_domain(self, y):
        return (y > 0) & (y < 1)

    def _loglik(self, y, mu, phi):
        a = mu * phi
        b = (1 - mu) * phi
        return (special.gammaln(phi) - special.gammaln(a) - special.gammaln(b)
                + (a - 1) * np.log(y) + (b - 1) * np.log1p(-y))

    def _dtheta(self, k, y, mu, phi):
        a = mu * phi
        b = (1 - mu) * phi
        ly = np.log(y)
        l1y = np.log1p(-y)
        if k == 0:
            return phi * (special.digamma(b) - special.digamma(a) + ly - l1y)
        return (special.digamma(phi) - mu * special.digamma(a) - (1 - mu) * special.digamma(b)
                + mu * ly + (1 - mu) * l1y)

    def _frozen(self, mu, phi):
        mu = np.asarray(mu, dtype=float)
        phi = np.asarray(phi, dtype=float)
        return stats.beta(a=mu * phi, b=(1 - mu) * phi)

    def start_values(self, y, weights):
        m = _wmean(y, weights)
        v = _wvar(y, weights)
        phi = m * (1 - m) / v - 1 if v > 0 else 1.0
        return [m, max(phi, 0.1)]


class StudentTFamily(Family):
    """Location-scale t with location ``mu``, scale ``sigma`` and degrees of freedom ``df``."""

    name = "studentt"
    param_names = ("mu", "sigma", "df")
    links = (IDENTITY, LOG, LOG)
    y_scaled_params = ("mu", "sigma")

    def _loglik(self, y, mu, sigma, df):
        z = (y - mu) / sigma
        return (special.gammaln((df + 1) / 2) - special.gammaln(df / 2)
                - 0.5 * np.log(np.pi * df) - np.log(sigma)
                - (df + 1) / 2 * np.log1p(z * z / df))

    def _dtheta(self, k, y, mu, sigma, df):
        z = (y - mu) / sigma
        z2 = z * z
        if k == 0:
            return (df + 1) * z / (sigma * (df + z2))
        if k == 1:
            return (-1.0 + (df + 1) * z2 / (df + z2)) / sigma
        return (0.5 * special.digamma((df + 1) / 2) - 0.5 * special.digamma(df / 2)
                - 0.5 / df - 0.5 * np.log1p(z2 / df) + (df + 1) * z2 / (2 * df * (df + z2)))

    def _frozen(self, mu, sigma, df):
        return stats.t(df=df, loc=mu, scale=sigma)

    def start_values(self, y, weights):
        m = float(np.median(y[weights > 0]))
        mad = float(np.median(np.abs(y[weights > 0] - m))) * 1.4826
        return [m, max(mad, 1e-3), 5.0]


FAMILIES: dict[str, Callable[[], Family]] = {
    "gaussian": GaussianFamily,
    "gamma": GammaFamily,
    "negbin": NegBinFamily,
    "beta": BetaFamily,
    "studentt": StudentTFamily,
}


def get_family(name: str | Family) -> Family:
    if isinstance(name, Family):
        return name
    try:
        return FAMILIES[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown family {name!r}; available: {sorted(FAMILIES)}") from None


def gaussian_family() -> Family:
    return GaussianFamily()


def gamma_family() -> Family:
    return GammaFamily()


def negbin_family() -> Family:
    return NegBinFamily()


def beta_family() -> Family:
    return BetaFamily()


def studentt_family() -> Family:
    return StudentTFamily()


# -- offsets ---------------------------------------------------------------

_ETA_BOUND = 30.0


def compute_offset(family: Family, y, weights=None, *, tol: float = 1e-8,
                   max_cycles: int = 100) -> np.ndarray:
    """Constant additive predictors maximizing the weighted log-likelihood.

    Coordinates are maximized one at a time on the eta scale (bounded Brent
    search) and cycled until no coordinate moves by more than ``tol``.  The
    Gaussian family uses its closed form.
    """
    family = get_family(family)
    y = family.check_response(y)
    if weights is None:
        weights = np.ones_like(y)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != y.shape:
        raise ValueError("weights and response differ in length")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValueError("weights must be non-negative with a positive sum")
    pos = weights > 0
    y, w = y[pos], weights[pos] / np.sum(weights[pos])

    if isinstance(family, GaussianFamily):
        mu = float(np.sum(w * y))
        sd = float(np.sqrt(np.sum(w * (y - mu) ** 2)))
        if sd < 1e-10:
            warnings.warn("response has zero variance; sigma offset floored at 1e-10",
                          RuntimeWarning, stacklevel=2)
            sd = 1e-10
        return np.array([mu, np.log(sd)])

    start = family.start_values(y, w)
    eta = np.array([float(link.inverse(np.clip(s, 1e-6, 1 - 1e-6) if link.kind == "logit" else s))
                    for link, s in zip(family.links, start)])
    if isinstance(family, StudentTFamily):
        lo, hi = float(np.min(y)), float(np.max(y))
    for cycle in range(max_cycles):
        change = 0.0
        for k in range(family.K):
            def objective(c, k=k):
                e = eta.copy()
                e[k] = c
                theta = [np.full(1, v) for v in family.thetas(e)]
                val = -np.sum(w * family._loglik(y, *theta))
                return val if np.isfinite(val) else np.inf

            if family.links[k].kind == "identity":
                bounds = (lo, hi) if isinstance(family, StudentTFamily) else (eta[k] - 1e3, eta[k] + 1e3)
            else:
                bounds = (-_ETA_BOUND, _ETA_BOUND)
            res = optimize.minimize_scalar(objective, bounds=bounds, method="bounded",
                                           options={"xatol": tol * 1e-2, "maxiter": 500})
            new = float(res.x)
            change = max(change, abs(new - eta[k]))
            eta[k] = new
        if change < tol:
            return eta
    raise OffsetError(
        f"{family.name}: offset search did not converge after {max_cycles} cycles "
        f"(last change {change:.3g}, eta={eta.tolist()})"
    )
