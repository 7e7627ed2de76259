"""Random-variate kernels and normal special functions used by the sampler.

Everything here is a pure function over an explicit ``numpy.random.Generator``,
so callers control seeding and stream splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.linalg import solve_triangular


class NumericalError(RuntimeError):
    """A linear-algebra or sampling step failed numerically."""


@dataclass(frozen=True)
class Interval:
    """Open interval with optionally infinite endpoints."""

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"invalid interval ({self.lower}, {self.upper})")


def make_rng(seed=None) -> np.random.Generator:
    return np.random.default_rng(seed)


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``n`` independent child streams."""
    return rng.spawn(n)


def normal_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def log_normal_cdf(x):
    """Log of the standard normal CDF, stable deep into the lower tail."""
    return special.log_ndtr(x)


def normal_quantile(p):
    """Standard normal quantile function."""
    return special.ndtri(p)


# Below this truncated mass the inverse-CDF map loses resolution and we fall
# back to rejection sampling for far-tail intervals.
_INVCDF_MIN_MASS = 1e-6


def _tail_draw(a: float, b: float, rng: np.random.Generator) -> float:
    """One standardized truncated-normal draw on (a, b) holding tiny mass."""
    neg = False
    if b <= 0.0:
        a, b, neg = -b, -a, True
    if a < 0.0:
        # narrow interval straddling the mode: uniform proposal, mode bound
        while True:
            x = rng.uniform(a, b)
            if math.log(1.0 - rng.random()) <= -0.5 * x * x:
                return -x if neg else x
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    if math.isfinite(b) and (b - a) * lam < 1.0:
        # interval much shorter than the proposal scale: uniform proposal
        while True:
            x = rng.uniform(a, b)
            if math.log(1.0 - rng.random()) <= 0.5 * (a * a - x * x):
                return -x if neg else x
    # shifted-exponential proposal for the right tail
    while True:
        x = a + rng.exponential(1.0 / lam)
        if x < b and math.log(1.0 - rng.random()) <= -0.5 * (x - lam) ** 2:
            return -x if neg else x


def truncated_normal(mu, sigma, lower, upper, rng: np.random.Generator):
    """Elementwise draws from N(mu, sigma^2) restricted to (lower, upper).

    Uses inverse-CDF sampling where the truncated region holds enough
    probability mass and tail-robust rejection sampling otherwise. All
    arguments broadcast against each other.
    """
    shape = np.broadcast_shapes(
        np.shape(mu), np.shape(sigma), np.shape(lower), np.shape(upper)
    )
    mu = np.broadcast_to(np.asarray(mu, dtype=float), shape)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), shape)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), shape)
    if np.any(sigma <= 0.0):
        raise ValueError("sigma must be positive")
    if not np.all(lower < upper):
        raise ValueError("truncation interval is empty")

    a = (lower - mu) / sigma
    b = (upper - mu) / sigma
    # ndtr is accurate in the lower tail only; reflect right-weighted
    # intervals so both endpoints are evaluated on the accurate side.
    with np.errstate(invalid="ignore"):
        flip = (a + b) > 0.0  # nan for (-inf, inf), which compares False
    af = np.where(flip, -b, a)
    bf = np.where(flip, -a, b)
    cdf_a = special.ndtr(af)
    cdf_b = special.ndtr(bf)
    mass = cdf_b - cdf_a

    x = np.empty(shape)
    hard = mass < _INVCDF_MIN_MASS
    easy = ~hard
    if np.any(easy):
        u = cdf_a[easy] + mass[easy] * rng.random(int(easy.sum()))
        x[easy] = special.ndtri(u)
    if np.any(hard):
        flat = np.flatnonzero(hard.ravel())
        af_flat, bf_flat = af.ravel(), bf.ravel()
        xr = x.ravel()
        for i in flat:
            xr[i] = _tail_draw(af_flat[i], bf_flat[i], rng)
        x = xr.reshape(shape)

    x = np.where(flip, -x, x)
    out = mu + sigma * x
    # rounding at the interval ends must not leak outside the support
    out = np.clip(out, np.nextafter(lower, upper), np.nextafter(upper, lower))
    return out if shape else float(out)


def sample_truncated_normal(mu, sigma, bounds: Interval, rng: np.random.Generator):
    """Draw from N(mu, sigma^2) restricted to ``bounds``."""
    return truncated_normal(mu, sigma, bounds.lower, bounds.upper, rng)


def sample_mvn(mean, cov, rng: np.random.Generator):
    """Exact multivariate normal draw via Cholesky factorization."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if mean.shape[0] == 0:
        return np.empty(0)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"covariance matrix is not SPD: {err}") from err
    return mean + chol @ rng.standard_normal(mean.shape[0])


def sample_mvn_precision(mean, precision, rng: np.random.Generator):
    """Multivariate normal draw parameterized by the precision matrix."""
    mean = np.asarray(mean, dtype=float)
    precision = np.asarray(precision, dtype=float)
    if mean.shape[0] == 0:
        return np.empty(0)
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"precision matrix is not SPD: {err}") from err
    eps = rng.standard_normal(mean.shape[0])
    return mean + solve_triangular(chol, eps, trans="T", lower=True)


def sample_inverse_gamma(alpha: float, gamma: float, rng: np.random.Generator) -> float:
    """Draw from the inverse-gamma distribution with shape alpha and scale gamma."""
    if alpha <= 0.0 or gamma <= 0.0:
        raise ValueError("inverse-gamma parameters must be positive")
    return gamma / rng.gamma(alpha)


def inverse_gamma_logpdf(x: float, alpha: float, gamma: float) -> float:
    """Log density of the inverse-gamma distribution (-inf outside support)."""
    if x <= 0.0:
        return -math.inf
    return (
        alpha * math.log(gamma)
        - math.lgamma(alpha)
        - (alpha + 1.0) * math.log(x)
        - gamma / x
    )
