"""Event-log ingestion, dyadic covariate construction, and dataset persistence.

Event logs are delimited text with a header row ``timestamp,sender,receivers``
where the receiver list uses ';' as a secondary delimiter. Actor attributes
are a CSV with an ``actor`` column plus arbitrary categorical fields.
Datasets round-trip exactly through a versioned .npz container.
"""

from __future__ import annotations

import csv
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .model import EventDataset, Message, potential_receivers

DATASET_FORMAT_VERSION = 1


class ParseError(Exception):
    """Input file malformed; the message carries the offending line number."""


class ConfigError(Exception):
    """A configuration value is missing, inconsistent, or refers to nothing."""


class EventRecord(NamedTuple):
    timestamp: float
    sender: str
    receivers: tuple


@dataclass(frozen=True)
class RawEventLog:
    """Validated, time-sorted event rows with a label-to-index mapping."""

    actor_labels: tuple
    events: tuple

    @property
    def n_actors(self) -> int:
        return len(self.actor_labels)

    @property
    def index_of(self) -> dict:
        return {label: i for i, label in enumerate(self.actor_labels)}


def load_events(path, actor_labels=None) -> RawEventLog:
    """Read and validate an event log; rows are stably sorted by timestamp.

    With ``actor_labels`` given, unknown labels are an error; otherwise the
    actor set is the sorted union of labels seen in the file.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ["timestamp", "sender", "receivers"]:
            raise ParseError(f"{path}:1: expected header 'timestamp,sender,receivers'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                ts = float(row[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from None
            sender = row[1].strip()
            receivers = tuple(r.strip() for r in row[2].split(";") if r.strip())
            if not sender:
                raise ParseError(f"{path}:{lineno}: missing sender")
            if not receivers:
                raise ParseError(f"{path}:{lineno}: empty receiver list")
            if sender in receivers:
                raise ParseError(f"{path}:{lineno}: sender among receivers")
            if len(set(receivers)) != len(receivers):
                raise ParseError(f"{path}:{lineno}: duplicate receivers")
            rows.append((lineno, EventRecord(ts, sender, receivers)))

    if actor_labels is None:
        labels = sorted({r.sender for _, r in rows}
                        | {x for _, r in rows for x in r.receivers})
    else:
        labels = list(actor_labels)
        known = set(labels)
        for lineno, rec in rows:
            for who in (rec.sender, *rec.receivers):
                if who not in known:
                    raise ParseError(f"{path}:{lineno}: unknown actor {who!r}")
    events = tuple(rec for _, rec in sorted(rows, key=lambda t: t[1].timestamp))
    return RawEventLog(tuple(labels), events)


@dataclass(frozen=True)
class ActorAttributes:
    """Per-actor categorical attribute table."""

    fields: tuple
    by_actor: dict

    def get(self, actor_label: str, field_name: str) -> str:
        return self.by_actor[actor_label][field_name]


def load_attributes(path) -> ActorAttributes:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "actor" not in reader.fieldnames:
            raise ParseError(f"{path}: attributes need an 'actor' column")
        fields = tuple(f for f in reader.fieldnames if f != "actor")
        by_actor = {}
        for lineno, row in enumerate(reader, start=2):
            label = row["actor"].strip()
            if not label:
                raise ParseError(f"{path}:{lineno}: missing actor label")
            if label in by_actor:
                raise ParseError(f"{path}:{lineno}: duplicate actor {label!r}")
            by_actor[label] = {f: (row[f] or "").strip() for f in fields}
    return ActorAttributes(fields, by_actor)


# --- covariate specification ----------------------------------------------------

@dataclass(frozen=True)
class DyadDummy:
    """1 when the sender and receiver attributes both match their target values."""

    sender_field: str
    sender_value: str
    receiver_field: str
    receiver_value: str

    @property
    def name(self) -> str:
        return (f"dyad[{self.sender_field}={self.sender_value},"
                f"{self.receiver_field}={self.receiver_value}]")


@dataclass(frozen=True)
class SameAttribute:
    """1 when sender and receiver share the value of one attribute field."""

    field: str

    @property
    def name(self) -> str:
        return f"same[{self.field}]"


@dataclass(frozen=True)
class Inertia:
    """Count of past sender-to-receiver messages within a trailing window."""

    window: float

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window length must be positive")

    @property
    def name(self) -> str:
        return f"inertia[{self.window:g}s]"


@dataclass(frozen=True)
class Reciprocity:
    """Count of past receiver-to-sender messages within a trailing window."""

    window: float

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window length must be positive")

    @property
    def name(self) -> str:
        return f"reciprocity[{self.window:g}s]"


@dataclass(frozen=True)
class CovariateSpec:
    """Ordered covariate definitions plus count-scaling options.

    Count covariates may be log1p-transformed and/or standardized across all
    (message, potential receiver) entries; raw counts are the default.
    """

    terms: tuple
    log1p_counts: bool = False
    standardize_counts: bool = False

    @property
    def names(self) -> tuple:
        return tuple(t.name for t in self.terms)

    @property
    def n_covariates(self) -> int:
        return len(self.terms)


def _attribute_vector(attrs, labels, field_name):
    return [attrs.by_actor[lab][field_name] for lab in labels]


def build_covariates(log: RawEventLog, attrs: ActorAttributes,
                     spec: CovariateSpec) -> EventDataset:
    """Assemble the per-message dyadic covariate blocks.

    Windowed counts use the strict past only: a message at time t counts
    earlier messages with timestamps in [t - window, t), so simultaneous
    messages never see each other.
    """
    a = log.n_actors
    index_of = log.index_of
    for term in spec.terms:
        for field_name in _fields_of(term):
            if field_name not in attrs.fields:
                raise ConfigError(f"attribute field {field_name!r} not available")
    for label in log.actor_labels:
        if label not in attrs.by_actor:
            raise ConfigError(f"actor {label!r} has no attribute row")

    k = spec.n_covariates
    count_cols = [j for j, t in enumerate(spec.terms)
                  if isinstance(t, (Inertia, Reciprocity))]
    # dyad histories: (sender idx, receiver idx) -> sorted list of timestamps
    history: dict = {}
    blocks = []
    senders_idx = []
    receivers_idx = []
    for rec in log.events:
        s = index_of[rec.sender]
        slots = potential_receivers(s, a)
        block = np.zeros((a - 1, k))
        for j, term in enumerate(spec.terms):
            if isinstance(term, DyadDummy):
                s_match = attrs.get(rec.sender, term.sender_field) == term.sender_value
                if s_match:
                    vals = _attribute_vector(attrs,
                                             [log.actor_labels[r] for r in slots],
                                             term.receiver_field)
                    block[:, j] = [v == term.receiver_value for v in vals]
            elif isinstance(term, SameAttribute):
                mine = attrs.get(rec.sender, term.field)
                vals = _attribute_vector(attrs,
                                         [log.actor_labels[r] for r in slots],
                                         term.field)
                block[:, j] = [v == mine for v in vals]
            elif isinstance(term, Inertia):
                for pos, r in enumerate(slots):
                    block[pos, j] = _window_count(history.get((s, int(r))),
                                                  rec.timestamp, term.window)
            elif isinstance(term, Reciprocity):
                for pos, r in enumerate(slots):
                    block[pos, j] = _window_count(history.get((int(r), s)),
                                                  rec.timestamp, term.window)
            else:
                raise ConfigError(f"unknown covariate term {term!r}")
        blocks.append(block)
        senders_idx.append(s)
        receivers_idx.append(frozenset(index_of[r] for r in rec.receivers))
        for r_label in rec.receivers:
            history.setdefault((s, index_of[r_label]), []).append(rec.timestamp)

    if count_cols and spec.log1p_counts:
        for block in blocks:
            block[:, count_cols] = np.log1p(block[:, count_cols])
    if count_cols and spec.standardize_counts and blocks:
        stacked = np.concatenate([b[:, count_cols] for b in blocks], axis=0)
        mean = stacked.mean(axis=0)
        sd = stacked.std(axis=0)
        sd[sd == 0] = 1.0
        for block in blocks:
            block[:, count_cols] = (block[:, count_cols] - mean) / sd

    messages = tuple(
        Message(sender=senders_idx[i], receivers=receivers_idx[i],
                covariates=blocks[i], timestamp=log.events[i].timestamp)
        for i in range(len(log.events))
    )
    return EventDataset(a, messages, k)


def _fields_of(term):
    if isinstance(term, DyadDummy):
        return (term.sender_field, term.receiver_field)
    if isinstance(term, SameAttribute):
        return (term.field,)
    return ()


def _window_count(times, t, window):
    if not times:
        return 0
    return bisect_left(times, t) - bisect_left(times, t - window)


# --- dataset container -----------------------------------------------------------

def export_dataset(dataset: EventDataset, path) -> None:
    """Write a dataset to a versioned .npz container (exact round trip)."""
    n = dataset.n_messages
    a = dataset.n_actors
    senders = np.array([m.sender for m in dataset.messages], dtype=np.int64)
    y = np.stack([dataset.receiver_indicator(i) for i in range(n)]) \
        if n else np.zeros((0, a - 1), dtype=bool)
    covariates = np.stack([m.covariates for m in dataset.messages]).astype(float) \
        if n else np.zeros((0, a - 1, dataset.n_covariates))
    timestamps = np.array(
        [np.nan if m.timestamp is None else m.timestamp for m in dataset.messages],
        dtype=float,
    )
    np.savez(
        path,
        format_version=DATASET_FORMAT_VERSION,
        n_actors=a,
        n_covariates=dataset.n_covariates,
        senders=senders,
        y=y.astype(np.uint8),
        covariates=covariates,
        timestamps=timestamps,
    )


def import_dataset(path) -> EventDataset:
    """Read a dataset written by :func:`export_dataset`."""
    path = Path(path)
    try:
        with np.load(path) as archive:
            data = {key: archive[key] for key in archive.files}
    except Exception as err:
        raise ParseError(f"{path}: cannot read dataset container: {err}") from err
    required = {"format_version", "n_actors", "n_covariates", "senders", "y",
                "covariates", "timestamps"}
    missing = required - set(data)
    if missing:
        raise ParseError(f"{path}: missing entries {sorted(missing)}")
    version = int(data["format_version"])
    if version != DATASET_FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported dataset format version {version}")
    a = int(data["n_actors"])
    k = int(data["n_covariates"])
    senders = data["senders"]
    y = data["y"].astype(bool)
    covariates = data["covariates"]
    timestamps = data["timestamps"]
    n = senders.shape[0]
    if y.shape != (n, a - 1) or covariates.shape != (n, a - 1, k) \
            or timestamps.shape != (n,):
        raise ParseError(f"{path}: inconsistent array shapes")
    messages = []
    for i in range(n):
        slots = potential_receivers(int(senders[i]), a)
        ts = timestamps[i]
        messages.append(Message(
            sender=int(senders[i]),
            receivers=frozenset(int(r) for r in slots[y[i]]),
            covariates=covariates[i],
            timestamp=None if np.isnan(ts) else float(ts),
        ))
    return EventDataset(a, tuple(messages), k)
