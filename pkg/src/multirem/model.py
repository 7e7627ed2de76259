"""Domain types and the generative model for multicast receiver sets.

A relational event is a message from one sender to a non-empty set of
receivers. Every potential receiver gets a latent Gaussian suitability
score; a per-message threshold drawn below the top score cuts the receiver
set out, so the set is never empty. Actors are indexed 0..A-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics


def potential_receivers(sender: int, n_actors: int) -> np.ndarray:
    """Actor indices that may receive a message from ``sender``, ascending."""
    idx = np.arange(n_actors)
    return np.delete(idx, sender)


@dataclass(frozen=True)
class Message:
    """One relational event: sender, receiver set, and dyadic covariates.

    ``covariates`` has one row per potential receiver in ascending actor
    order with the sender's row absent, shape (A-1, K).
    """

    sender: int
    receivers: frozenset
    covariates: np.ndarray
    timestamp: float | None = None


@dataclass(frozen=True)
class EventDataset:
    """A validated collection of messages over a fixed actor set."""

    n_actors: int
    messages: tuple
    n_covariates: int

    def __post_init__(self):
        if self.n_actors <= 1:
            raise ValueError("need at least two actors")
        if self.n_covariates < 0:
            raise ValueError("covariate dimension must be non-negative")
        object.__setattr__(self, "messages", tuple(self.messages))
        for i, msg in enumerate(self.messages):
            if not 0 <= msg.sender < self.n_actors:
                raise ValueError(f"message {i}: sender {msg.sender} out of range")
            if not msg.receivers:
                raise ValueError(f"message {i}: empty receiver set")
            if msg.sender in msg.receivers:
                raise ValueError(f"message {i}: sender in its own receiver set")
            if not all(0 <= r < self.n_actors for r in msg.receivers):
                raise ValueError(f"message {i}: receiver out of range")
            expected = (self.n_actors - 1, self.n_covariates)
            if msg.covariates.shape != expected:
                raise ValueError(
                    f"message {i}: covariate block shape {msg.covariates.shape}, "
                    f"expected {expected}"
                )

    @property
    def n_messages(self) -> int:
        return len(self.messages)

    def receiver_indicator(self, i: int) -> np.ndarray:
        """Boolean inclusion vector over potential receivers for message ``i``."""
        msg = self.messages[i]
        slots = potential_receivers(msg.sender, self.n_actors)
        return np.isin(slots, list(msg.receivers))


def with_intercept(dataset: EventDataset) -> EventDataset:
    """Prepend an all-ones column to every covariate block.

    The fit model keeps the popularity effects zero-mean, so a baseline
    inclusion level must be absorbed by an intercept coefficient.
    """
    messages = tuple(
        replace(m, covariates=np.hstack([np.ones((dataset.n_actors - 1, 1)), m.covariates]))
        for m in dataset.messages
    )
    return EventDataset(dataset.n_actors, messages, dataset.n_covariates + 1)


@dataclass
class LatentState:
    """One full state of the model: coefficients, effects, factors, scores."""

    beta: np.ndarray  # (K,)
    b: np.ndarray  # (A,)
    U: np.ndarray  # (A, Q) receiver factors
    V: np.ndarray  # (A, Q) sender factors
    W: np.ndarray  # (n, Q) message factors
    z: np.ndarray  # (n, A-1) suitability scores
    c: np.ndarray  # (n,) thresholds
    sigma_b2: float
    sigma_c2: float

    def copy(self) -> "LatentState":
        return LatentState(
            self.beta.copy(), self.b.copy(), self.U.copy(), self.V.copy(),
            self.W.copy(), self.z.copy(), self.c.copy(),
            float(self.sigma_b2), float(self.sigma_c2),
        )

    def validate(self, dataset: EventDataset) -> None:
        """Raise if the state violates its consistency invariants."""
        if self.sigma_b2 <= 0 or self.sigma_c2 <= 0:
            raise ValueError("variance parameters must be positive")
        for i in range(dataset.n_messages):
            y = dataset.receiver_indicator(i)
            included = self.z[i] > self.c[i]
            if not np.array_equal(y, included):
                raise ValueError(f"message {i}: y and 1(z > c) disagree")
            if not self.c[i] < self.z[i].max():
                raise ValueError(f"message {i}: threshold not below the top score")


@dataclass(frozen=True)
class BetaPrior:
    """Gaussian prior on the fixed-effect coefficients.

    With ``unit_information=True`` the covariance is g*(X'X)^-1 with g equal
    to the number of messages; otherwise an explicit (or default zero-mean,
    identity-covariance) normal prior is used.
    """

    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    unit_information: bool = False

    def resolve(self, x_flat: np.ndarray, n_messages: int):
        """Concrete (mean, covariance) for a design with K columns."""
        k = x_flat.shape[1]
        if self.unit_information:
            xtx = x_flat.T @ x_flat
            try:
                cov = n_messages * np.linalg.inv(xtx)
            except np.linalg.LinAlgError as err:
                raise numerics.NumericalError(
                    f"X'X singular, unit-information prior undefined: {err}"
                ) from err
            return np.zeros(k), cov
        mean = np.zeros(k) if self.mean is None else np.asarray(self.mean, float)
        cov = np.eye(k) if self.cov is None else np.asarray(self.cov, float)
        if mean.shape != (k,) or cov.shape != (k, k):
            raise ValueError("prior dimensions do not match the covariates")
        if not np.allclose(cov, cov.T):
            raise ValueError("prior covariance must be symmetric")
        return mean, cov

    def to_dict(self) -> dict:
        return {
            "mean": None if self.mean is None else np.asarray(self.mean).tolist(),
            "cov": None if self.cov is None else np.asarray(self.cov).tolist(),
            "unit_information": self.unit_information,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BetaPrior":
        return cls(
            mean=None if d.get("mean") is None else np.asarray(d["mean"], float),
            cov=None if d.get("cov") is None else np.asarray(d["cov"], float),
            unit_information=bool(d.get("unit_information", False)),
        )


@dataclass(frozen=True)
class ModelConfig:
    """Latent dimension, fixed threshold mean, and prior hyperparameters."""

    Q: int
    mu_c: float = 0.0
    beta_prior: BetaPrior = field(default_factory=BetaPrior)
    sigma_b2_prior: tuple = (2.0, 1.0)  # (alpha_b, gamma_b)
    sigma_c2_prior: tuple = (20.0, 3.0)  # (alpha_c, gamma_c)

    def __post_init__(self):
        if self.Q < 0:
            raise ValueError("latent dimension must be non-negative")
        for name in ("sigma_b2_prior", "sigma_c2_prior"):
            alpha, gamma = getattr(self, name)
            if alpha <= 0 or gamma <= 0:
                raise ValueError(f"{name} parameters must be positive")

    def to_dict(self) -> dict:
        return {
            "Q": self.Q,
            "mu_c": self.mu_c,
            "beta_prior": self.beta_prior.to_dict(),
            "sigma_b2_prior": list(self.sigma_b2_prior),
            "sigma_c2_prior": list(self.sigma_c2_prior),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            Q=int(d["Q"]),
            mu_c=float(d.get("mu_c", 0.0)),
            beta_prior=BetaPrior.from_dict(d.get("beta_prior", {})),
            sigma_b2_prior=tuple(d.get("sigma_b2_prior", (2.0, 1.0))),
            sigma_c2_prior=tuple(d.get("sigma_c2_prior", (20.0, 3.0))),
        )


def mean_suitability(beta, x, b_r, u_r, v_s, w_si) -> float:
    """Expected suitability x'beta + b_r + u_r'(v_s + w_si)."""
    beta = np.asarray(beta, float)
    x = np.asarray(x, float)
    u_r = np.asarray(u_r, float)
    v_s = np.asarray(v_s, float)
    w_si = np.asarray(w_si, float)
    if x.shape != beta.shape:
        raise ValueError("covariate and coefficient dimensions disagree")
    if not (u_r.shape == v_s.shape == w_si.shape):
        raise ValueError("latent factor dimensions disagree")
    return float(x @ beta + b_r + u_r @ (v_s + w_si))


def inclusion_probability(z_sir, z_max, mu_c: float, sigma_c: float):
    """Probability that a score z_sir enters the receiver set given the top score.

    Computed as exp(logPhi(a) - logPhi(b)) so deeply negative scores do not
    underflow to 0/0.
    """
    if sigma_c <= 0:
        raise ValueError("sigma_c must be positive")
    z_sir = np.asarray(z_sir, float)
    z_max = np.asarray(z_max, float)
    if np.any(z_sir > z_max):
        raise ValueError("z_sir exceeds the maximum score")
    out = np.exp(
        numerics.log_normal_cdf((z_sir - mu_c) / sigma_c)
        - numerics.log_normal_cdf((z_max - mu_c) / sigma_c)
    )
    return out if out.shape else float(out)


def marginal_covariance(u_minus_s: np.ndarray) -> np.ndarray:
    """Covariance I + U U' of the scores with the message factor integrated out."""
    u_minus_s = np.asarray(u_minus_s, float)
    p = u_minus_s.shape[0]
    return np.eye(p) + u_minus_s @ u_minus_s.T


def simulate_receiver_sets(theta: np.ndarray, mu_c: float, sigma_c: float,
                           rng: np.random.Generator):
    """Vectorized generative draw for a batch of messages.

    ``theta`` has shape (n, P) with one row of expected suitabilities per
    message. Returns (z, c, y) where y marks scores above the threshold.
    """
    if sigma_c <= 0:
        raise ValueError("sigma_c must be positive")
    theta = np.atleast_2d(np.asarray(theta, float))
    z = theta + rng.standard_normal(theta.shape)
    c = numerics.truncated_normal(mu_c, sigma_c, -np.inf, z.max(axis=1), rng)
    c = np.atleast_1d(c)
    y = z > c[:, None]
    return z, c, y


def simulate_event(sender: int, theta: np.ndarray, mu_c: float, sigma_c: float,
                   rng: np.random.Generator):
    """Draw scores, threshold, and the receiver set for a single message."""
    theta = np.asarray(theta, float)
    z, c, y = simulate_receiver_sets(theta[None, :], mu_c, sigma_c, rng)
    slots = potential_receivers(sender, theta.shape[0] + 1)
    receivers = frozenset(int(r) for r in slots[y[0]])
    return z[0], float(c[0]), receivers


@dataclass(frozen=True)
class SimulationDesign:
    """Ground-truth configuration for synthetic data generation.

    Defaults reproduce the reference simulation setting: 50 actors, three
    correlated covariates with effects (0.25, 0, 0.25), popularity effects
    N(-4.5, 0.25), one latent dimension with sender/receiver correlation
    0.7, threshold scale 0.16, and 40 expected messages per actor.
    """

    n_actors: int = 50
    beta: tuple = (0.25, 0.0, 0.25)
    covariate_correlation: float = 0.3
    mu_b: float = -4.5
    sigma_b2: float = 0.25
    Q: int = 1
    uv_correlation: float = 0.7
    mu_c: float = 0.0
    sigma_c2: float = 0.16
    message_rate: float = 40.0

    def __post_init__(self):
        if self.n_actors <= 1:
            raise ValueError("need at least two actors")
        if self.message_rate <= 0:
            raise ValueError("message rate must be positive")
        if self.sigma_b2 <= 0 or self.sigma_c2 <= 0:
            raise ValueError("variances must be positive")
        if not -1.0 < self.uv_correlation < 1.0:
            raise ValueError("uv correlation must be in (-1, 1)")
        if self.Q < 0:
            raise ValueError("latent dimension must be non-negative")

    def to_dict(self) -> dict:
        return {
            "n_actors": self.n_actors,
            "beta": list(self.beta),
            "covariate_correlation": self.covariate_correlation,
            "mu_b": self.mu_b,
            "sigma_b2": self.sigma_b2,
            "Q": self.Q,
            "uv_correlation": self.uv_correlation,
            "mu_c": self.mu_c,
            "sigma_c2": self.sigma_c2,
            "message_rate": self.message_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationDesign":
        known = {f: d[f] for f in d}
        if "beta" in known:
            known["beta"] = tuple(known["beta"])
        return cls(**known)


def simulate_dataset(design: SimulationDesign, rng: np.random.Generator):
    """Generate a synthetic dataset plus its ground-truth latent state."""
    a_count = design.n_actors
    beta = np.asarray(design.beta, float)
    k = beta.shape[0]
    q = design.Q

    counts = rng.poisson(design.message_rate, a_count)
    n = int(counts.sum())
    senders = np.repeat(np.arange(a_count), counts)

    b = design.mu_b + math.sqrt(design.sigma_b2) * rng.standard_normal(a_count)
    u_mat = np.empty((a_count, q))
    v_mat = np.empty((a_count, q))
    rho = design.uv_correlation
    for dim in range(q):
        pair = rng.standard_normal((a_count, 2))
        u_mat[:, dim] = pair[:, 0]
        v_mat[:, dim] = rho * pair[:, 0] + math.sqrt(1.0 - rho * rho) * pair[:, 1]

    if k:
        corr = np.full((k, k), design.covariate_correlation)
        np.fill_diagonal(corr, 1.0)
        chol = np.linalg.cholesky(corr)
        x = rng.standard_normal((n, a_count - 1, k)) @ chol.T
    else:
        x = np.zeros((n, a_count - 1, 0))
    w = rng.standard_normal((n, q))

    slots = np.array([potential_receivers(s, a_count) for s in senders], dtype=int) \
        if n else np.zeros((0, a_count - 1), dtype=int)
    theta = (
        x @ beta
        + b[slots]
        + np.einsum("naq,nq->na", u_mat[slots], v_mat[senders] + w)
    ) if n else np.zeros((0, a_count - 1))

    if n:
        z, c, y = simulate_receiver_sets(theta, design.mu_c,
                                         math.sqrt(design.sigma_c2), rng)
    else:
        z = np.zeros((0, a_count - 1))
        c = np.zeros(0)
        y = np.zeros((0, a_count - 1), dtype=bool)

    messages = tuple(
        Message(
            sender=int(senders[i]),
            receivers=frozenset(int(r) for r in slots[i][y[i]]),
            covariates=x[i],
        )
        for i in range(n)
    )
    dataset = EventDataset(a_count, messages, k)
    truth = LatentState(
        beta=beta, b=b, U=u_mat, V=v_mat, W=w, z=z, c=c,
        sigma_b2=design.sigma_b2, sigma_c2=design.sigma_c2,
    )
    return dataset, truth
