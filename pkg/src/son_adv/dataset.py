"""E-RAB KPI records: schema, synthetic generator, CSV I/O, encoding, scaling, splits."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, EncodingError, ParseError, StratificationError, UndefinedRateError

log = logging.getLogger(__name__)

NORMAL, ANOMALY = 0, 1
LABEL_TOKENS = ("normal", "anomaly")

DROP_REASONS = ("tnl", "radio", "congestion", "handover", "other")
DROP_COLUMNS = tuple(f"drop_{r}" for r in DROP_REASONS)

INDEPENDENT_COLUMNS = (
    "signal_strength_dbm",
    "rsrq_db",
    "sinr_db",
    "cqi_avg",
    "latency_ms",
    "jitter_ms",
    "packet_loss_pct",
    "active_users",
    "max_users",
    "rrc_attempts",
    "handover_attempts",
    "prb_dl_pct",
    "prb_ul_pct",
    "dl_throughput_mbps",
    "ul_throughput_mbps",
)

GROUP_TIME_LOCATION = "time/location"
GROUP_DEPENDENT = "dependent (drop reasons)"
GROUP_INDEPENDENT = "independent"

CSV_COLUMNS = (
    "hour_of_day", "day_index", "enodeb_id", "cell_id",
    *DROP_COLUMNS,
    *INDEPENDENT_COLUMNS,
    "erab_normal_releases", "erab_abnormal_releases",
    "label",
)
_INT_COLUMNS = {"hour_of_day", "day_index", "active_users", "max_users", "rrc_attempts", "handover_attempts",
                "erab_normal_releases", "erab_abnormal_releases", *DROP_COLUMNS}
_STR_COLUMNS = {"enodeb_id", "cell_id"}


@dataclass
class KpiRecord:
    """One hourly measurement row for one eNodeB."""

    hour_of_day: int
    day_index: int
    enodeb_id: str
    cell_id: str
    drop_reason_counts: dict[str, int]
    signal_strength_dbm: float
    rsrq_db: float
    sinr_db: float
    cqi_avg: float
    latency_ms: float
    jitter_ms: float
    packet_loss_pct: float
    active_users: int
    max_users: int
    rrc_attempts: int
    handover_attempts: int
    prb_dl_pct: float
    prb_ul_pct: float
    dl_throughput_mbps: float
    ul_throughput_mbps: float
    erab_normal_releases: int
    erab_abnormal_releases: int
    label: int = NORMAL

    def __post_init__(self):
        if not 0 <= self.hour_of_day <= 23:
            raise DataError(f"hour_of_day out of range: {self.hour_of_day}")
        if any(c < 0 for c in self.drop_reason_counts.values()):
            raise DataError("negative drop count")
        if self.erab_normal_releases < 0 or self.erab_abnormal_releases < 0:
            raise DataError("negative release count")
        if self.erab_abnormal_releases != sum(self.drop_reason_counts.values()):
            raise DataError("erab_abnormal_releases must equal the sum of drop reasons")
        if self.label not in (NORMAL, ANOMALY):
            raise DataError(f"bad label {self.label!r}")

    @property
    def day_of_week(self) -> int:
        return self.day_index % 7

    @property
    def rate_undefined(self) -> bool:
        return self.erab_normal_releases == 0

    def value(self, name: str):
        if name.startswith("drop_"):
            return self.drop_reason_counts[name[5:]]
        return getattr(self, name)


def compute_drop_rate(abnormal_releases, normal_releases) -> float:
    """E-RAB drop rate in percent: 100 * abnormal / normal."""
    if normal_releases <= 0:
        raise UndefinedRateError("drop rate undefined with zero normal releases")
    return 100.0 * abnormal_releases / normal_releases


def label_records(records: Sequence[KpiRecord], threshold: float) -> list[KpiRecord]:
    """Label anomaly iff drop rate > threshold.

    Records with zero normal releases keep their existing (injected) label;
    they are identifiable afterwards through ``rate_undefined``.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    out = []
    for rec in records:
        if rec.rate_undefined:
            log.warning("undefined drop rate (day %d hour %d %s); keeping label",
                        rec.day_index, rec.hour_of_day, rec.enodeb_id)
            out.append(rec)
            continue
        rate = compute_drop_rate(rec.erab_abnormal_releases, rec.erab_normal_releases)
        out.append(replace(rec, label=ANOMALY if rate > threshold else NORMAL))
    return out


# --- synthetic generation -------------------------------------------------

# share of baseline (non-anomalous) drops per reason; TNL is the largest
_BASE_SHARES = np.array([0.30, 0.25, 0.18, 0.17, 0.10])
# baseline and anomalous drop rates, as multiples of the labelling threshold
_BASE_RATE = (0.05, 0.7)
_SPIKE_RATE = (1.3, 2.6)
# optional log-normal spread of transport KPIs (latency, jitter, loss); 0 disables it
_KPI_TAIL = 0.0


@dataclass
class GeneratorConfig:
    n_enodebs: int = 2
    n_days: int = 93
    anomaly_rate: float = 0.1174
    tnl_anomaly_share: float = 0.7
    seed: int = 0
    drop_rate_anomaly_threshold: float = 2.0

    def __post_init__(self):
        if self.n_enodebs < 1 or self.n_days < 1:
            raise ValueError("n_enodebs and n_days must be >= 1")
        if not 0 < self.anomaly_rate < 1:
            raise ValueError("anomaly_rate must be in (0, 1)")
        if not 0 <= self.tnl_anomaly_share <= 1:
            raise ValueError("tnl_anomaly_share must be in [0, 1]")
        if not self.drop_rate_anomaly_threshold > 0:
            raise ValueError("drop_rate_anomaly_threshold must be positive")

    @property
    def n_records(self) -> int:
        return self.n_enodebs * self.n_days * 24


def enodeb_names(n: int) -> list[str]:
    return [f"eNB-{i}" for i in range(n)]


def generate(config: GeneratorConfig) -> list[KpiRecord]:
    """Synthetic hourly KPI rows with injected drop-rate spikes.

    Normal hours draw a baseline drop rate well under the threshold; anomaly
    hours (an exact ``round(anomaly_rate * n)`` sample) get extra drops that
    lift the rate above it, ``tnl_anomaly_share`` of them on the TNL reason.
    Transport trouble also shows up mildly in latency, jitter and packet loss.
    ``label`` holds the injected ground truth.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_records
    n_anom = int(round(config.anomaly_rate * n))
    is_anom = np.zeros(n, dtype=bool)
    is_anom[rng.choice(n, size=n_anom, replace=False)] = True
    threshold = config.drop_rate_anomaly_threshold
    tnl_share = config.tnl_anomaly_share

    names = enodeb_names(config.n_enodebs)
    site_users = rng.uniform(140, 220, size=config.n_enodebs)
    site_rsrp = rng.uniform(-98, -86, size=config.n_enodebs)

    records = []
    i = 0
    for e, enb in enumerate(names):
        for day in range(config.n_days):
            weekend = day % 7 >= 5
            for hour in range(24):
                anomaly = bool(is_anom[i])
                i += 1
                load = 0.6 + 0.4 * np.sin(np.pi * max(hour - 5, 0) / 19) ** 2
                if weekend:
                    load *= 0.9
                users = int(rng.poisson(site_users[e] * load)) + 5
                normal = int(rng.poisson(users * 6.0)) + 20

                base_rate = threshold * rng.uniform(*_BASE_RATE) / 100.0
                base_total = int(rng.poisson(normal * base_rate))
                counts = rng.multinomial(base_total, _BASE_SHARES)
                latency = rng.gamma(9.0, 2.0) + 0.04 * users
                jitter = rng.gamma(4.0, 1.0)
                loss = rng.gamma(2.0, 0.1)
                if anomaly:
                    target = threshold * rng.uniform(*_SPIKE_RATE) / 100.0
                    extra = max(int(np.ceil(normal * target)) - base_total, 1)
                    tnl_extra = int(rng.binomial(extra, tnl_share))
                    counts[0] += tnl_extra
                    counts += rng.multinomial(extra - tnl_extra, _BASE_SHARES)
                    latency += rng.gamma(2.0, 4.0) * tnl_share
                    jitter += rng.gamma(2.0, 1.0) * tnl_share
                    loss += rng.gamma(2.0, 0.1) * tnl_share

                if _KPI_TAIL:
                    latency *= rng.lognormal(0.0, _KPI_TAIL)
                    jitter *= rng.lognormal(0.0, _KPI_TAIL)
                    loss *= rng.lognormal(0.0, _KPI_TAIL)
                rsrp = site_rsrp[e] + rng.normal(0, 3)
                sinr = 18 - 8 * load + rng.normal(0, 3)
                prb_dl = float(np.clip(100 * load * rng.uniform(0.6, 0.95) + rng.normal(0, 4), 1, 100))
                records.append(KpiRecord(
                    hour_of_day=hour,
                    day_index=day,
                    enodeb_id=enb,
                    cell_id=f"{enb}-cell-1",
                    drop_reason_counts=dict(zip(DROP_REASONS, (int(c) for c in counts))),
                    signal_strength_dbm=float(rsrp),
                    rsrq_db=float(np.clip(-9 - 4 * load + rng.normal(0, 1.5), -20, -3)),
                    sinr_db=float(sinr),
                    cqi_avg=float(np.clip(7 + 0.35 * sinr + rng.normal(0, 0.8), 1, 15)),
                    latency_ms=float(latency),
                    jitter_ms=float(jitter),
                    packet_loss_pct=float(loss),
                    active_users=users,
                    max_users=users + int(rng.poisson(0.3 * users)),
                    rrc_attempts=int(rng.poisson(users * 9.0)),
                    handover_attempts=int(rng.poisson(users * 1.5)),
                    prb_dl_pct=prb_dl,
                    prb_ul_pct=float(np.clip(0.45 * prb_dl + rng.normal(0, 5), 1, 100)),
                    dl_throughput_mbps=float(max(0.5, rng.normal(60 * (1.1 - 0.5 * load), 8))),
                    ul_throughput_mbps=float(max(0.1, rng.normal(12 * (1.1 - 0.5 * load), 2))),
                    erab_normal_releases=normal,
                    erab_abnormal_releases=int(counts.sum()),
                    label=ANOMALY if anomaly else NORMAL,
                ))
    return records


# --- CSV -------------------------------------------------------------------

def _record_row(rec: KpiRecord) -> list[str]:
    row = []
    for col in CSV_COLUMNS:
        if col == "label":
            row.append(LABEL_TOKENS[rec.label])
            continue
        v = rec.value(col)
        # repr() is the shortest string that round-trips a float64 exactly
        row.append(repr(float(v)) if isinstance(v, float) else str(v))
    return row


def save_csv(records: Sequence[KpiRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(_record_row(rec))


def load_csv(path, schema: "FeatureSchema | None" = None) -> list[KpiRecord]:
    """Read records written by :func:`save_csv` (or any CSV with the same header)."""
    required = list(CSV_COLUMNS)
    if schema is not None:
        required += [d.name for d in schema.features if d.name not in CSV_COLUMNS and d.name != "day_of_week"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        for col in required:
            if col not in header:
                raise ParseError("missing column", row=1, column=col)
        pos = {name: header.index(name) for name in CSV_COLUMNS}
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(row)}", row=lineno)
            fields: dict = {}
            drops = {}
            for col in CSV_COLUMNS:
                cell = row[pos[col]]
                if col == "label":
                    if cell not in LABEL_TOKENS:
                        raise ParseError(f"bad label token {cell!r}", row=lineno, column=col)
                    fields["label"] = LABEL_TOKENS.index(cell)
                    continue
                if col in _STR_COLUMNS:
                    fields[col] = cell
                    continue
                try:
                    val = int(cell) if col in _INT_COLUMNS else float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric value {cell!r}", row=lineno, column=col) from None
                if col.startswith("drop_"):
                    drops[col[5:]] = val
                else:
                    fields[col] = val
            try:
                records.append(KpiRecord(drop_reason_counts=drops, **fields))
            except DataError as exc:
                raise ParseError(str(exc), row=lineno) from None
    return records


# --- features ----------------------------------------------------------------

@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    kind: str  # "numeric" or "nominal"
    group: str = GROUP_INDEPENDENT
    categories: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return len(self.categories) if self.kind == "nominal" else 1

    def encoded_names(self) -> list[str]:
        if self.kind == "nominal":
            return [f"{self.name}={c}" for c in self.categories]
        return [self.name]


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureDescriptor, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        for f in self.features:
            if f.kind not in ("numeric", "nominal"):
                raise ValueError(f"{f.name}: unknown kind {f.kind!r}")
            if f.kind == "nominal" and not f.categories:
                raise ValueError(f"{f.name}: nominal feature needs categories")

    @property
    def raw_width(self) -> int:
        return len(self.features)

    @property
    def encoded_width(self) -> int:
        return sum(f.width for f in self.features)

    def encoded_names(self) -> list[str]:
        return [n for f in self.features for n in f.encoded_names()]

    def encoded_groups(self) -> list[str]:
        return [f.group for f in self.features for _ in range(f.width)]

    def to_dict(self) -> dict:
        return {"features": [
            {"name": f.name, "kind": f.kind, "group": f.group, "categories": list(f.categories)}
            for f in self.features
        ]}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        return cls(tuple(
            FeatureDescriptor(d["name"], d["kind"], d.get("group", GROUP_INDEPENDENT),
                              tuple(d.get("categories", ())))
            for d in doc["features"]
        ))


def default_schema(enodeb_ids: Sequence[str] = ("eNB-0", "eNB-1")) -> FeatureSchema:
    """25 raw columns; with two eNodeBs the one-hot encoding is 26 wide."""
    feats = [
        FeatureDescriptor("hour_of_day", "numeric", GROUP_TIME_LOCATION),
        FeatureDescriptor("day_of_week", "numeric", GROUP_TIME_LOCATION),
        FeatureDescriptor("enodeb_id", "nominal", GROUP_TIME_LOCATION, tuple(enodeb_ids)),
    ]
    feats += [FeatureDescriptor(c, "numeric", GROUP_DEPENDENT) for c in DROP_COLUMNS]
    feats += [
        FeatureDescriptor("erab_abnormal_releases", "numeric", GROUP_DEPENDENT),
        FeatureDescriptor("erab_normal_releases", "numeric", GROUP_DEPENDENT),
    ]
    feats += [FeatureDescriptor(c, "numeric", GROUP_INDEPENDENT) for c in INDEPENDENT_COLUMNS]
    return FeatureSchema(tuple(feats))


def encode(records: Sequence[KpiRecord], schema: FeatureSchema) -> tuple[np.ndarray, np.ndarray]:
    """Raw (unscaled) feature matrix with one-hot nominal groups, plus labels."""
    x = np.zeros((len(records), schema.encoded_width))
    for r, rec in enumerate(records):
        col = 0
        for f in schema.features:
            v = rec.value(f.name)
            if f.kind == "nominal":
                if v not in f.categories:
                    raise EncodingError(f"feature {f.name!r}: unseen category {v!r}")
                x[r, col + f.categories.index(v)] = 1.0
            else:
                x[r, col] = float(v)
            col += f.width
    y = np.array([rec.label for rec in records], dtype=np.int64)
    return x, y


@dataclass
class Scaler:
    min: np.ndarray
    max: np.ndarray

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Scaler":
        return cls(np.asarray(doc["min"], dtype=np.float64), np.asarray(doc["max"], dtype=np.float64))


def fit_scaler(train_matrix) -> Scaler:
    x = np.asarray(train_matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("cannot fit a scaler on an empty matrix")
    return Scaler(x.min(axis=0), x.max(axis=0))


def apply_scaler(matrix, scaler: Scaler) -> np.ndarray:
    """(v - min) / (max - min), clamped to [0, 1]; constant columns map to 0."""
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("cannot scale an empty matrix")
    span = scaler.max - scaler.min
    const = span == 0
    out = (x - scaler.min) / np.where(const, 1.0, span)
    out[:, const] = 0.0
    return np.clip(out, 0.0, 1.0)


@dataclass
class EncodedDataset:
    features: np.ndarray
    labels: np.ndarray
    schema: FeatureSchema
    scaling: Scaler | None = None

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "EncodedDataset":
        return EncodedDataset(self.features[idx], self.labels[idx], self.schema, self.scaling)

    @property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features, self.labels


def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items, computed exactly.

    Equal remainders favour the later partition, so a 70/15/15 split of
    4464 gives 3125/669/670.
    """
    fr = [Fraction(str(r)) for r in ratios]
    total = sum(fr)
    if abs(total - 1) > Fraction(1, 10**9) or any(r < 0 for r in fr):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {list(ratios)}")
    fr = [r / total for r in fr]  # absorbs float noise such as 3 * (1/3)
    quotas = [n * r for r in fr]
    sizes = [int(q) for q in quotas]  # floor; quotas are non-negative
    left = n - sum(sizes)
    order = sorted(range(len(fr)), key=lambda i: (quotas[i] - sizes[i], i), reverse=True)
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def split_indices(labels, ratios: Sequence[float] = (0.7, 0.15, 0.15), seed: int = 0,
                  stratified: bool = True) -> list[np.ndarray]:
    """Disjoint, exhaustive, seeded index partitions (sorted within each part)."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(len(labels))
        bounds = np.cumsum([0, *split_sizes(len(labels), ratios)])
        return [np.sort(perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    parts = [[] for _ in ratios]
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        perm = members[rng.permutation(len(members))]
        bounds = np.cumsum([0, *split_sizes(len(members), ratios)])
        for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            parts[k].append(perm[a:b])
    out = [np.sort(np.concatenate(p)) for p in parts]
    if np.any(labels == ANOMALY):
        for k, (idx, r) in enumerate(zip(out, ratios)):
            if r > 0 and not np.any(labels[idx] == ANOMALY):
                raise StratificationError(f"partition {k} received no anomalies")
    return out


def split(dataset: EncodedDataset, ratios=(0.7, 0.15, 0.15), seed: int = 0,
          stratified: bool = True) -> tuple[EncodedDataset, ...]:
    return tuple(dataset.subset(idx) for idx in split_indices(dataset.labels, ratios, seed, stratified))


@dataclass
class PreparedData:
    train: EncodedDataset
    valid: EncodedDataset
    test: EncodedDataset
    scaler: Scaler
    schema: FeatureSchema
    indices: list[np.ndarray] = field(default_factory=list)


def prepare(records: Sequence[KpiRecord], schema: FeatureSchema, ratios=(0.7, 0.15, 0.15),
            seed: int = 0, stratified: bool = True) -> PreparedData:
    """Encode, split, then min-max scale with statistics from the train part only."""
    raw, labels = encode(records, schema)
    idx = split_indices(labels, ratios, seed, stratified)
    scaler = fit_scaler(raw[idx[0]])
    parts = [
        EncodedDataset(apply_scaler(raw[i], scaler) if len(i) else raw[i], labels[i], schema, scaler)
        for i in idx
    ]
    return PreparedData(*parts, scaler=scaler, schema=schema, indices=idx)
