"""Data-augmented Gibbs sampler for the latent factor receiver-set model.

Given the suitability scores z and thresholds c, every remaining block is a
textbook conjugate update (the residual noise has unit variance), except the
threshold variance, which gets a log-scale random-walk Metropolis step, and
the scores themselves, which get a per-message Metropolis-Hastings step with
a componentwise truncated-normal proposal. See docs/conditionals.md for the
derivations of the conjugate moments.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import numerics
from .model import EventDataset, LatentState, ModelConfig, potential_receivers
from .numerics import NumericalError

SWEEP_ORDER = ("z", "c", "sigma_c2", "beta", "b", "sigma_b2", "U", "V", "W")

DRAWS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class McmcSettings:
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    rw_step: float = 0.3
    adapt: bool = True
    target_acceptance: float = 0.44
    store_latent: bool = True
    score_scans: int = 1

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.rw_step <= 0:
            raise ValueError("rw_step must be positive")
        if self.score_scans < 1:
            raise ValueError("score_scans must be >= 1")


class Design:
    """Array views of a dataset precomputed for repeated sweeps."""

    def __init__(self, dataset: EventDataset):
        self.n_actors = dataset.n_actors
        self.n_covariates = dataset.n_covariates
        self.n_messages = dataset.n_messages
        a, k, n = self.n_actors, self.n_covariates, self.n_messages
        self.senders = np.fromiter(
            (m.sender for m in dataset.messages), dtype=int, count=n
        )
        self.slots = (
            np.stack([potential_receivers(s, a) for s in self.senders])
            if n else np.zeros((0, a - 1), dtype=int)
        )
        self.covariates = (
            np.stack([m.covariates for m in dataset.messages]).astype(float)
            if n else np.zeros((0, a - 1, k))
        )
        self.x_flat = self.covariates.reshape(n * (a - 1), k)
        self.xtx = self.x_flat.T @ self.x_flat
        self.y = np.stack(
            [dataset.receiver_indicator(i) for i in range(n)]
        ) if n else np.zeros((0, a - 1), dtype=bool)
        self.sender_counts = np.bincount(self.senders, minlength=a)

    def set_receivers(self, y: np.ndarray) -> None:
        """Replace the inclusion indicators (used when re-simulating data)."""
        y = np.asarray(y, dtype=bool)
        if y.shape != self.y.shape:
            raise ValueError("indicator shape mismatch")
        if not np.all(y.any(axis=1)):
            raise ValueError("every message needs at least one receiver")
        self.y = y


# --- individual block updates -------------------------------------------------

def beta_conditional(resid, x_flat, xtx, prior_mean, prior_cov):
    """Posterior (mean, precision) of the coefficients given unit-variance residuals."""
    prior_prec = np.linalg.inv(prior_cov)
    precision = prior_prec + xtx
    rhs = prior_prec @ prior_mean + x_flat.T @ np.ravel(resid)
    try:
        mean = np.linalg.solve(precision, rhs)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"singular posterior precision for beta: {err}") from err
    return mean, precision


def update_beta(resid, x_flat, xtx, prior_mean, prior_cov, rng):
    mean, precision = beta_conditional(resid, x_flat, xtx, prior_mean, prior_cov)
    return numerics.sample_mvn_precision(mean, precision, rng)


def b_conditional(resid, slots, n_actors, sigma_b2):
    """Per-actor posterior (mean, variance) of the popularity effects."""
    sums = np.bincount(slots.ravel(), weights=np.ravel(resid), minlength=n_actors)
    counts = np.bincount(slots.ravel(), minlength=n_actors)
    var = 1.0 / (1.0 / sigma_b2 + counts)
    return var * sums, var


def update_b(resid, slots, n_actors, sigma_b2, rng):
    mean, var = b_conditional(resid, slots, n_actors, sigma_b2)
    return mean + np.sqrt(var) * rng.standard_normal(n_actors)


def update_sigma_b2(b, prior, rng):
    alpha, gamma = prior
    return numerics.sample_inverse_gamma(
        alpha + 0.5 * b.shape[0], gamma + 0.5 * float(b @ b), rng
    )


def update_c(z, y, mu_c, sigma_c, rng):
    """Thresholds drawn between the top excluded and bottom included scores."""
    lower = np.where(y, -np.inf, z).max(axis=1)
    upper = np.where(y, z, np.inf).min(axis=1)
    if not np.all(lower < upper):
        raise NumericalError("scores inconsistent with receiver sets")
    return np.atleast_1d(numerics.truncated_normal(mu_c, sigma_c, lower, upper, rng))


def sigma_c2_log_target(value, c, zmax, mu_c, prior):
    """Unnormalized log conditional density of the threshold variance.

    Product over messages of the truncated normal density of c (including
    the Phi normalizer of its upper bound) times the inverse-gamma prior.
    """
    if value <= 0:
        return -math.inf
    alpha, gamma = prior
    sigma = math.sqrt(value)
    loglik = (
        -0.5 * c.shape[0] * math.log(value)
        - float(np.sum((c - mu_c) ** 2)) / (2.0 * value)
        - float(np.sum(numerics.log_normal_cdf((zmax - mu_c) / sigma)))
    )
    return loglik + numerics.inverse_gamma_logpdf(value, alpha, gamma)


def update_sigma_c2(c, zmax, current, prior, mu_c, rw_step, rng):
    """Log-scale Gaussian random-walk MH step for the threshold variance."""
    proposal = current * math.exp(rw_step * rng.standard_normal())
    log_ratio = (
        sigma_c2_log_target(proposal, c, zmax, mu_c, prior)
        + math.log(proposal)
        - sigma_c2_log_target(current, c, zmax, mu_c, prior)
        - math.log(current)
    )
    accepted = math.log(1.0 - rng.random()) <= log_ratio
    return (proposal if accepted else current), accepted


def z_log_acceptance(zmax_old, zmax_new, mu_c, sigma_c):
    """Per-message log MH acceptance ratio for a score-vector proposal."""
    return (
        numerics.log_normal_cdf((np.asarray(zmax_old) - mu_c) / sigma_c)
        - numerics.log_normal_cdf((np.asarray(zmax_new) - mu_c) / sigma_c)
    )


def update_z(z, theta, y, c, mu_c, sigma_c, rng):
    """Per-message MH update of the suitability scores.

    The proposal is componentwise truncated normal around theta on the side
    of the threshold dictated by the inclusion indicator, so consistency
    with the data is maintained by construction.
    """
    lower = np.where(y, c[:, None], -np.inf)
    upper = np.where(y, np.inf, c[:, None])
    proposal = numerics.truncated_normal(theta, 1.0, lower, upper, rng)
    log_alpha = z_log_acceptance(z.max(axis=1), proposal.max(axis=1), mu_c, sigma_c)
    accepted = np.log(1.0 - rng.random(c.shape[0])) <= log_alpha
    return np.where(accepted[:, None], proposal, z), accepted


def _scatter_rows(index, values, n_bins):
    """Sum rows of ``values`` (m, Q) into ``n_bins`` groups given by ``index``."""
    q = values.shape[1]
    out = np.empty((n_bins, q))
    for dim in range(q):
        out[:, dim] = np.bincount(index, weights=values[:, dim], minlength=n_bins)
    return out


def update_u(resid, slots, m, senders, n_actors, rng):
    """Receiver-factor update; ``m`` = V[senders] + W, ``resid`` = z - Xb - b_R."""
    q = m.shape[1]
    if q == 0:
        return np.zeros((n_actors, 0))
    mm = m[:, :, None] * m[:, None, :]  # (n, Q, Q)
    s_all = mm.sum(axis=0)
    s_sender = np.empty((n_actors, q, q))
    for i in range(q):
        for j in range(q):
            s_sender[:, i, j] = np.bincount(
                senders, weights=mm[:, i, j], minlength=n_actors
            )
    contrib = (m[:, None, :] * resid[:, :, None]).reshape(-1, q)
    cross = _scatter_rows(slots.ravel(), contrib, n_actors)
    eye = np.eye(q)
    out = np.empty((n_actors, q))
    for r in range(n_actors):
        precision = eye + s_all - s_sender[r]
        mean = np.linalg.solve(precision, cross[r])
        out[r] = numerics.sample_mvn_precision(mean, precision, rng)
    return out


def update_v(resid_nw, u_slots, u_mat, senders, sender_counts, rng):
    """Sender-factor update; ``resid_nw`` = z - Xb - b_R - (U_R . W)."""
    n_actors, q = u_mat.shape
    if q == 0:
        return np.zeros((n_actors, 0))
    per_message = np.einsum("naq,na->nq", u_slots, resid_nw)
    cross = _scatter_rows(senders, per_message, n_actors)
    g_all = u_mat.T @ u_mat
    eye = np.eye(q)
    out = np.empty((n_actors, q))
    for s in range(n_actors):
        g_s = g_all - np.outer(u_mat[s], u_mat[s])
        precision = eye + sender_counts[s] * g_s
        mean = np.linalg.solve(precision, cross[s])
        out[s] = numerics.sample_mvn_precision(mean, precision, rng)
    return out


def update_w(resid_nv, u_slots, u_mat, senders, rng):
    """Message-factor update; ``resid_nv`` = z - Xb - b_R - (U_R . V_s)."""
    n = resid_nv.shape[0]
    q = u_mat.shape[1]
    if q == 0:
        return np.zeros((n, 0))
    cross = np.einsum("naq,na->nq", u_slots, resid_nv)
    u_s = u_mat[senders]
    g_all = u_mat.T @ u_mat
    precision = np.eye(q) + g_all[None] - u_s[:, :, None] * u_s[:, None, :]
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"message-factor precision not SPD: {err}") from err
    mean = np.linalg.solve(precision, cross[:, :, None])[:, :, 0]
    eps = rng.standard_normal((n, q))
    dev = np.linalg.solve(np.transpose(chol, (0, 2, 1)), eps[:, :, None])[:, :, 0]
    return mean + dev


def _check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite values in block '{name}'")


class GibbsSampler:
    """One-sweep engine over a fixed dataset; ``run_chain`` drives it."""

    def __init__(self, dataset: EventDataset, config: ModelConfig,
                 rw_step: float = 0.3, score_scans: int = 1):
        self.design = Design(dataset)
        self.config = config
        self.beta_mean, self.beta_cov = config.beta_prior.resolve(
            self.design.x_flat, self.design.n_messages
        )
        self.rw_step = rw_step
        self.score_scans = score_scans

    @staticmethod
    def _prior_center(prior):
        alpha, gamma = prior
        return gamma / (alpha - 1.0) if alpha > 1.0 else gamma / (alpha + 1.0)

    def initial_state(self, rng) -> LatentState:
        d, cfg = self.design, self.config
        q = cfg.Q
        c = np.full(d.n_messages, cfg.mu_c)
        z = np.where(d.y, cfg.mu_c + 0.5, cfg.mu_c - 0.5)
        return LatentState(
            beta=self.beta_mean.copy(),
            b=np.zeros(d.n_actors),
            U=rng.standard_normal((d.n_actors, q)),
            V=rng.standard_normal((d.n_actors, q)),
            W=rng.standard_normal((d.n_messages, q)),
            z=z, c=c,
            sigma_b2=self._prior_center(cfg.sigma_b2_prior),
            sigma_c2=self._prior_center(cfg.sigma_c2_prior),
        )

    def mean_matrix(self, state: LatentState) -> np.ndarray:
        """Expected suitability per (message, potential receiver)."""
        d = self.design
        xb = (d.x_flat @ state.beta).reshape(d.n_messages, d.n_actors - 1) \
            if d.n_covariates else 0.0
        mult = np.einsum(
            "naq,nq->na", state.U[d.slots], state.V[d.senders] + state.W
        ) if self.config.Q else 0.0
        return xb + state.b[d.slots] + mult

    def resimulate_data(self, state: LatentState, rng) -> None:
        """Redraw (W, z, c, y) from the generative model at the current globals.

        Mutates both the state and the design's inclusion indicators. This is
        the data-regeneration half of a joint-distribution (Geweke-style)
        sampler validation; it is not part of posterior sampling.
        """
        d, cfg = self.design, self.config
        state.W = rng.standard_normal((d.n_messages, cfg.Q))
        theta = self.mean_matrix(state)
        sigma_c = math.sqrt(state.sigma_c2)
        state.z = theta + rng.standard_normal(theta.shape)
        zmax = state.z.max(axis=1)
        state.c = np.atleast_1d(
            numerics.truncated_normal(cfg.mu_c, sigma_c, -np.inf, zmax, rng)
        )
        d.set_receivers(state.z > state.c[:, None])

    def sweep(self, state: LatentState, rng) -> dict:
        """One full Gibbs sweep in the fixed order z, c, sigma_c2, beta, b,
        sigma_b2, U, V, W. Mutates ``state`` in place."""
        d, cfg = self.design, self.config
        sigma_c = math.sqrt(state.sigma_c2)

        xb = (d.x_flat @ state.beta).reshape(d.n_messages, d.n_actors - 1) \
            if d.n_covariates else np.zeros((d.n_messages, d.n_actors - 1))
        b_slots = state.b[d.slots]
        m = state.V[d.senders] + state.W
        mult = np.einsum("naq,nq->na", state.U[d.slots], m) \
            if cfg.Q else np.zeros_like(xb)
        theta = xb + b_slots + mult

        # the score/threshold pair mixes slowly relative to the other blocks,
        # so it may be rescanned several times per sweep (each pass is a valid
        # conditional update, so any repeat count leaves the target invariant)
        for _ in range(self.score_scans):
            state.z, z_accepted = update_z(
                state.z, theta, d.y, state.c, cfg.mu_c, sigma_c, rng
            )
            state.c = update_c(state.z, d.y, cfg.mu_c, sigma_c, rng)
        _check_finite("z", state.z)
        _check_finite("c", state.c)
        zmax = state.z.max(axis=1)

        state.sigma_c2, sc2_accepted = update_sigma_c2(
            state.c, zmax, state.sigma_c2, cfg.sigma_c2_prior, cfg.mu_c,
            self.rw_step, rng,
        )
        _check_finite("sigma_c2", state.sigma_c2)

        if d.n_covariates:
            state.beta = update_beta(
                state.z - b_slots - mult, d.x_flat, d.xtx,
                self.beta_mean, self.beta_cov, rng,
            )
            _check_finite("beta", state.beta)
            xb = (d.x_flat @ state.beta).reshape(d.n_messages, d.n_actors - 1)

        state.b = update_b(state.z - xb - mult, d.slots, d.n_actors,
                           state.sigma_b2, rng)
        _check_finite("b", state.b)
        b_slots = state.b[d.slots]

        state.sigma_b2 = update_sigma_b2(state.b, cfg.sigma_b2_prior, rng)
        _check_finite("sigma_b2", state.sigma_b2)

        if cfg.Q:
            base = state.z - xb - b_slots
            state.U = update_u(base, d.slots, m, d.senders, d.n_actors, rng)
            _check_finite("U", state.U)
            u_slots = state.U[d.slots]
            state.V = update_v(
                base - np.einsum("naq,nq->na", u_slots, state.W),
                u_slots, state.U, d.senders, d.sender_counts, rng,
            )
            _check_finite("V", state.V)
            state.W = update_w(
                base - np.einsum("naq,nq->na", u_slots, state.V[d.senders]),
                u_slots, state.U, d.senders, rng,
            )
            _check_finite("W", state.W)

        return {
            "z_accept_rate": float(z_accepted.mean()) if z_accepted.size else 1.0,
            "sigma_c2_accepted": bool(sc2_accepted),
        }


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in snapshots of the chain plus run metadata."""

    beta: np.ndarray  # (D, K)
    b: np.ndarray  # (D, A)
    sigma_b2: np.ndarray  # (D,)
    sigma_c2: np.ndarray  # (D,)
    U: np.ndarray | None  # (D, A, Q)
    V: np.ndarray | None  # (D, A, Q)
    W: np.ndarray | None  # (D, n, Q)
    accept_z: float
    accept_sigma_c2: float
    final_rw_step: float
    mu_c: float
    settings: McmcSettings
    config_echo: dict
    wall_clock_seconds: float = float("nan")

    @property
    def n_draws(self) -> int:
        return self.sigma_b2.shape[0]

    def state_params(self, j: int) -> dict:
        """Parameter snapshot ``j`` in the form the replicator consumes."""
        if self.U is None or self.V is None:
            if self.config_echo.get("Q", 0) > 0:
                raise ValueError("latent factors were not stored in this run")
            a = self.b.shape[1]
            u = v = np.zeros((a, 0))
        else:
            u, v = self.U[j], self.V[j]
        return {
            "beta": self.beta[j],
            "b": self.b[j],
            "U": u,
            "V": v,
            "W": None if self.W is None else self.W[j],
            "sigma_c2": float(self.sigma_c2[j]),
            "mu_c": self.mu_c,
        }

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        arrays = {"beta": self.beta, "b": self.b,
                  "sigma_b2": self.sigma_b2, "sigma_c2": self.sigma_c2}
        for name in ("U", "V", "W"):
            value = getattr(self, name)
            if value is not None:
                arrays[name] = value
        for name, value in arrays.items():
            np.save(path / f"{name}.npy", value)
        meta = {
            "format_version": DRAWS_FORMAT_VERSION,
            "sweep_order": list(SWEEP_ORDER),
            "settings": asdict(self.settings),
            "config": self.config_echo,
            "mu_c": self.mu_c,
            "acceptance": {"z": self.accept_z, "sigma_c2": self.accept_sigma_c2},
            "final_rw_step": self.final_rw_step,
            "wall_clock_seconds": self.wall_clock_seconds,
            "shapes": {k: list(v.shape) for k, v in arrays.items()},
        }
        (path / "meta.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, path) -> "PosteriorDraws":
        path = Path(path)
        meta = json.loads((path / "meta.json").read_text())
        if meta.get("format_version") != DRAWS_FORMAT_VERSION:
            raise ValueError(
                f"unsupported draws format version {meta.get('format_version')}"
            )
        def read(name):
            f = path / f"{name}.npy"
            return np.load(f) if f.exists() else None
        draws = cls(
            beta=read("beta"), b=read("b"),
            sigma_b2=read("sigma_b2"), sigma_c2=read("sigma_c2"),
            U=read("U"), V=read("V"), W=read("W"),
            accept_z=meta["acceptance"]["z"],
            accept_sigma_c2=meta["acceptance"]["sigma_c2"],
            final_rw_step=meta["final_rw_step"],
            mu_c=meta["mu_c"],
            settings=McmcSettings(**meta["settings"]),
            config_echo=meta["config"],
            wall_clock_seconds=meta.get("wall_clock_seconds", float("nan")),
        )
        for name, shape in meta["shapes"].items():
            value = getattr(draws, name)
            if value is None or list(value.shape) != shape:
                raise ValueError(f"draws array '{name}' missing or misshaped")
        return draws


def run_chain(dataset: EventDataset, config: ModelConfig,
              settings: McmcSettings) -> PosteriorDraws:
    """Run the Gibbs sampler and collect thinned post-burn-in draws."""
    if dataset.n_messages < 1:
        raise ValueError("cannot fit an empty dataset")
    sampler = GibbsSampler(dataset, config, rw_step=settings.rw_step,
                           score_scans=settings.score_scans)
    rng = numerics.make_rng(settings.seed)
    state = sampler.initial_state(rng)

    d = sampler.design
    n_keep = (settings.iterations - settings.burn_in) // settings.thin
    beta = np.empty((n_keep, d.n_covariates))
    b = np.empty((n_keep, d.n_actors))
    sigma_b2 = np.empty(n_keep)
    sigma_c2 = np.empty(n_keep)
    if settings.store_latent:
        u = np.empty((n_keep, d.n_actors, config.Q))
        v = np.empty((n_keep, d.n_actors, config.Q))
        w = np.empty((n_keep, d.n_messages, config.Q))
    else:
        u = v = w = None

    z_acc_sum = 0.0
    sc2_acc_sum = 0
    post_sweeps = 0
    stored = 0
    start = time.perf_counter()
    for it in range(settings.iterations):
        try:
            info = sampler.sweep(state, rng)
        except NumericalError as err:
            raise NumericalError(f"iteration {it}: {err}") from err
        if settings.adapt and it < settings.burn_in:
            gain = (it + 1) ** -0.6
            accepted = 1.0 if info["sigma_c2_accepted"] else 0.0
            sampler.rw_step *= math.exp(
                gain * (accepted - settings.target_acceptance)
            )
        if it >= settings.burn_in:
            z_acc_sum += info["z_accept_rate"]
            sc2_acc_sum += info["sigma_c2_accepted"]
            post_sweeps += 1
            offset = it - settings.burn_in
            if offset % settings.thin == 0 and stored < n_keep:
                beta[stored] = state.beta
                b[stored] = state.b
                sigma_b2[stored] = state.sigma_b2
                sigma_c2[stored] = state.sigma_c2
                if settings.store_latent:
                    u[stored] = state.U
                    v[stored] = state.V
                    w[stored] = state.W
                stored += 1
    elapsed = time.perf_counter() - start

    return PosteriorDraws(
        beta=beta, b=b, sigma_b2=sigma_b2, sigma_c2=sigma_c2,
        U=u, V=v, W=w,
        accept_z=z_acc_sum / post_sweeps,
        accept_sigma_c2=sc2_acc_sum / post_sweeps,
        final_rw_step=sampler.rw_step,
        mu_c=config.mu_c,
        settings=settings,
        config_echo=config.to_dict(),
        wall_clock_seconds=elapsed,
    )


# --- summaries -----------------------------------------------------------------

def split_rhat(x: np.ndarray) -> float:
    """Split-chain potential scale reduction for a single scalar trace."""
    x = np.asarray(x, float)
    half = x.shape[0] // 2
    chains = np.stack([x[:half], x[half:2 * half]])
    mean_per = chains.mean(axis=1)
    within = chains.var(axis=1, ddof=1).mean()
    between = half * np.var(mean_per, ddof=1)
    if within == 0:
        return 1.0
    var_hat = (half - 1) / half * within + between / half
    return float(np.sqrt(var_hat / within))


def summarize_draws(draws: PosteriorDraws) -> dict:
    """Posterior mean, sd, and central interval per scalar parameter block."""
    def block(samples):
        samples = np.asarray(samples, float)
        q = np.percentile(samples, [2.5, 50.0, 97.5], axis=0)
        return {
            "mean": samples.mean(axis=0).tolist(),
            "sd": samples.std(axis=0, ddof=1).tolist(),
            "q2.5": q[0].tolist(),
            "q50": q[1].tolist(),
            "q97.5": q[2].tolist(),
        }
    out = {
        "b": block(draws.b),
        "sigma_b2": block(draws.sigma_b2),
        "sigma_c2": block(draws.sigma_c2),
    }
    if draws.beta.shape[1]:
        out["beta"] = block(draws.beta)
    return out


def latent_summaries(draws: PosteriorDraws) -> dict:
    """Rotation-invariant posterior summaries of the latent factors.

    Raw factor draws are identified only up to a shared orthogonal rotation
    and sign, so means of U U' (receiver-factor inner products) and U V'
    (sender-receiver affinities) are reported instead.
    """
    if draws.U is None or draws.V is None:
        raise ValueError("latent factors were not stored in this run")
    uu = np.einsum("daq,dbq->dab", draws.U, draws.U)
    uv = np.einsum("daq,dbq->dab", draws.U, draws.V)
    return {
        "uu_mean": uu.mean(axis=0),
        "uu_sd": uu.std(axis=0, ddof=1),
        "uv_mean": uv.mean(axis=0),
        "uv_sd": uv.std(axis=0, ddof=1),
    }
