"""Posterior predictive checks for model assessment and dimension selection.

Four statistics are compared between the observed data and replicates drawn
from posterior parameter snapshots: the receiver-count distribution (t1),
per-sender receiver popularity (t2), and two triple-product transitivity
statistics over centered send counts (t3, t4).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics
from .mcmc import Design, PosteriorDraws
from .model import EventDataset, Message, simulate_receiver_sets

QUANTILE_LEVELS = (2.5, 25.0, 50.0, 75.0, 97.5)


def stat_t1(dataset: EventDataset) -> dict:
    """Relative frequency of messages with m receivers, for each observed m."""
    if dataset.n_messages < 1:
        raise ValueError("t1 undefined on an empty dataset")
    sizes = [len(m.receivers) for m in dataset.messages]
    counts = np.bincount(sizes)
    n = dataset.n_messages
    return {int(m): counts[m] / n for m in np.flatnonzero(counts)}


def stat_t2(dataset: EventDataset, sender: int) -> np.ndarray:
    """Fraction of the sender's messages received by each potential receiver."""
    rows = [i for i, m in enumerate(dataset.messages) if m.sender == sender]
    if not rows:
        raise ValueError(f"actor {sender} sent no messages; t2 undefined")
    indicators = np.stack([dataset.receiver_indicator(i) for i in rows])
    return indicators.sum(axis=0) / len(rows)


def _centered_send_counts(dataset: EventDataset) -> np.ndarray:
    """Row-centered send-count matrix, scaled by (A-1) to stay integer-valued.

    Entry (s, r) is (A-1) * #{messages s -> r} minus the total number of
    receivers over s's messages; the diagonal is zero. Integer-valued floats
    keep the triple sums exact for datasets of moderate size.
    """
    a = dataset.n_actors
    counts = np.zeros((a, a), dtype=np.int64)
    for m in dataset.messages:
        for r in m.receivers:
            counts[m.sender, r] += 1
    scaled = (a - 1) * counts - counts.sum(axis=1, keepdims=True)
    np.fill_diagonal(scaled, 0)
    return scaled.astype(float)


def _triple_sum(dataset: EventDataset, transpose_last: bool) -> float:
    if dataset.n_actors < 3:
        raise ValueError("transitivity statistics need at least three actors")
    e = _centered_send_counts(dataset)
    last = e.T if transpose_last else e
    return float(np.sum((e @ e) * last)) / (dataset.n_actors - 1) ** 3


def stat_t3(dataset: EventDataset) -> float:
    """Transitivity: sum over ordered triples of e_sj * e_jr * e_sr."""
    return _triple_sum(dataset, transpose_last=False)


def stat_t4(dataset: EventDataset) -> float:
    """Reverse-direction transitivity: sum of e_sj * e_jr * e_rs."""
    return _triple_sum(dataset, transpose_last=True)


def _replicate_from_design(design: Design, params: dict, rng, reuse_w: bool):
    """Inclusion indicators of one replicate, conditioning on observed senders."""
    q = params["U"].shape[1]
    if reuse_w:
        if params["W"] is None:
            raise ValueError("posterior W not stored; cannot reuse message factors")
        w = params["W"]
    else:
        w = rng.standard_normal((design.n_messages, q))
    theta = (
        design.covariates @ params["beta"]
        + params["b"][design.slots]
        + np.einsum("naq,nq->na", params["U"][design.slots],
                    params["V"][design.senders] + w)
    )
    _, _, y = simulate_receiver_sets(
        theta, params["mu_c"], float(np.sqrt(params["sigma_c2"])), rng
    )
    return y


def replicate(dataset: EventDataset, params: dict, rng, reuse_w: bool = False
              ) -> EventDataset:
    """Regenerate the receiver sets from one posterior parameter snapshot.

    Senders, message counts, and covariates stay fixed at their observed
    values; message factors are redrawn from their prior unless ``reuse_w``.
    """
    a = dataset.n_actors
    if params["beta"].shape[0] != dataset.n_covariates:
        raise ValueError("coefficient dimension does not match the dataset")
    if params["b"].shape[0] != a:
        raise ValueError("popularity-effect dimension does not match the dataset")
    design = Design(dataset)
    y = _replicate_from_design(design, params, rng, reuse_w)
    messages = tuple(
        Message(
            sender=m.sender,
            receivers=frozenset(int(r) for r in design.slots[i][y[i]]),
            covariates=m.covariates,
            timestamp=m.timestamp,
        )
        for i, m in enumerate(dataset.messages)
    )
    return EventDataset(a, messages, dataset.n_covariates)


def posterior_predictive_pvalue(observed: float, replicates) -> float:
    """Two-sided p-value from the rank of the observed value among replicates."""
    rep = np.asarray(replicates, float)
    rank = (np.sum(rep < observed) + 0.5 * np.sum(rep == observed)) / rep.shape[0]
    return float(min(1.0, 2.0 * min(rank, 1.0 - rank)))


@dataclass
class PpcReport:
    """Observed statistics with their replicate distributions and p-values."""

    n_replicates: int
    statistics: tuple
    t1_bins: list | None = None  # receiver counts m
    t1_observed: list | None = None
    t1_quantiles: dict | None = None  # level -> list per bin
    t1_replicates: np.ndarray | None = None  # (D, len(bins))
    t2: dict = field(default_factory=dict)  # sender -> summary dict
    t3: dict | None = None  # observed, replicates, p_value
    t4: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "n_replicates": self.n_replicates,
            "statistics": list(self.statistics),
        }
        if self.t1_bins is not None:
            out["t1"] = {
                "bins": self.t1_bins,
                "observed": self.t1_observed,
                "quantiles": self.t1_quantiles,
            }
        if self.t2:
            out["t2"] = {str(s): v for s, v in self.t2.items()}
        for name in ("t3", "t4"):
            value = getattr(self, name)
            if value is not None:
                out[name] = {
                    "observed": value["observed"],
                    "p_value": value["p_value"],
                    "replicates": list(value["replicates"]),
                }
        return out

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _quantile_table(matrix: np.ndarray) -> dict:
    qs = np.percentile(matrix, QUANTILE_LEVELS, axis=0)
    return {str(level): qs[i].tolist() for i, level in enumerate(QUANTILE_LEVELS)}


def run_ppc(dataset: EventDataset, draws: PosteriorDraws,
            statistics=("t1", "t2", "t3", "t4"), senders=None,
            n_replicates: int | None = None, rng=None,
            reuse_w: bool = False) -> PpcReport:
    """Compare observed statistics against replicates from posterior draws.

    One replicate per retained draw by default; ``n_replicates`` subsamples
    the draws evenly. ``senders`` picks the actors for the per-sender
    popularity check (default: every actor that sent a message).
    """
    if draws.n_draws < 1:
        raise ValueError("no posterior draws available")
    unknown = set(statistics) - {"t1", "t2", "t3", "t4"}
    if unknown:
        raise ValueError(f"unknown statistics: {sorted(unknown)}")
    if rng is None:
        rng = numerics.make_rng()

    design = Design(dataset)
    if n_replicates is None or n_replicates >= draws.n_draws:
        draw_indices = np.arange(draws.n_draws)
    else:
        draw_indices = np.unique(
            np.linspace(0, draws.n_draws - 1, n_replicates).round().astype(int)
        )
    n_rep = draw_indices.shape[0]

    if senders is None:
        senders = [s for s in range(dataset.n_actors) if design.sender_counts[s]]
    else:
        for s in senders:
            if design.sender_counts[s] == 0:
                raise ValueError(f"actor {s} sent no messages; t2 undefined")
    sender_rows = {
        s: np.flatnonzero(design.senders == s) for s in senders
    }

    want_t1 = "t1" in statistics
    want_t2 = "t2" in statistics
    want_t3 = "t3" in statistics
    want_t4 = "t4" in statistics

    obs_t1 = stat_t1(dataset) if want_t1 else None
    obs_t2 = {s: stat_t2(dataset, s) for s in senders} if want_t2 else None
    obs_t3 = stat_t3(dataset) if want_t3 else None
    obs_t4 = stat_t4(dataset) if want_t4 else None

    rep_sizes = np.empty((n_rep, dataset.n_actors), dtype=float) if want_t1 else None
    rep_t2 = {s: np.empty((n_rep, dataset.n_actors - 1)) for s in senders} \
        if want_t2 else None
    rep_t3 = np.empty(n_rep) if want_t3 else None
    rep_t4 = np.empty(n_rep) if want_t4 else None

    for k, j in enumerate(draw_indices):
        params = draws.state_params(int(j))
        y = _replicate_from_design(design, params, rng, reuse_w)
        if want_t1:
            sizes = y.sum(axis=1)
            rep_sizes[k] = np.bincount(sizes, minlength=dataset.n_actors) \
                / dataset.n_messages
        if want_t2:
            for s in senders:
                rows = sender_rows[s]
                rep_t2[s][k] = y[rows].sum(axis=0) / rows.shape[0]
        if want_t3 or want_t4:
            rep_dataset = _dataset_from_indicators(dataset, design, y)
            if want_t3:
                rep_t3[k] = stat_t3(rep_dataset)
            if want_t4:
                rep_t4[k] = stat_t4(rep_dataset)

    report = PpcReport(n_replicates=n_rep, statistics=tuple(statistics))
    if want_t1:
        bins = sorted(set(obs_t1) | set(np.flatnonzero(rep_sizes.sum(axis=0))))
        report.t1_bins = [int(m) for m in bins]
        report.t1_observed = [obs_t1.get(m, 0.0) for m in bins]
        matrix = rep_sizes[:, bins]
        report.t1_quantiles = _quantile_table(matrix)
        report.t1_replicates = matrix
    if want_t2:
        for s in senders:
            observed = obs_t2[s]
            order = np.argsort(-observed, kind="stable")
            report.t2[s] = {
                "observed": observed.tolist(),
                "quantiles": _quantile_table(rep_t2[s]),
                "popularity_order": order.tolist(),
            }
    if want_t3:
        report.t3 = {
            "observed": obs_t3,
            "replicates": rep_t3,
            "p_value": posterior_predictive_pvalue(obs_t3, rep_t3),
        }
    if want_t4:
        report.t4 = {
            "observed": obs_t4,
            "replicates": rep_t4,
            "p_value": posterior_predictive_pvalue(obs_t4, rep_t4),
        }
    return report


def _dataset_from_indicators(dataset: EventDataset, design: Design,
                             y: np.ndarray) -> EventDataset:
    messages = tuple(
        Message(
            sender=m.sender,
            receivers=frozenset(int(r) for r in design.slots[i][y[i]]),
            covariates=m.covariates,
            timestamp=m.timestamp,
        )
        for i, m in enumerate(dataset.messages)
    )
    return EventDataset(dataset.n_actors, messages, dataset.n_covariates)
