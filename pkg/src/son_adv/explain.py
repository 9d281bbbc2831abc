"""Rank encoded features by how often an attack changed them."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import FeatureSchema
from .errors import ShapeError


@dataclass(frozen=True)
class FeatureImportance:
    feature: int
    name: str
    group: str
    nonzero_delta_count: int
    mean_abs_delta: float


def feature_deltas(original, adversarial, schema: FeatureSchema) -> list[FeatureImportance]:
    """Per-column count of rows where adversarial - original is nonzero.

    Sorted by count, then mean absolute delta (both descending), then name.
    Exact float inequality is intended: attacks copy untouched coordinates
    bit for bit.
    """
    x = np.asarray(original, dtype=np.float64)
    adv = np.asarray(adversarial, dtype=np.float64)
    if x.shape != adv.shape or x.ndim != 2:
        raise ShapeError(f"original {x.shape} vs adversarial {adv.shape}")
    if x.shape[1] != schema.encoded_width:
        raise ShapeError(f"matrix width {x.shape[1]} vs schema width {schema.encoded_width}")
    delta = adv - x
    counts = np.count_nonzero(delta != 0.0, axis=0)
    mean_abs = np.abs(delta).mean(axis=0) if x.shape[0] else np.zeros(x.shape[1])
    rows = [
        FeatureImportance(j, name, group, int(counts[j]), float(mean_abs[j]))
        for j, (name, group) in enumerate(zip(schema.encoded_names(), schema.encoded_groups()))
    ]
    rows.sort(key=lambda r: (-r.nonzero_delta_count, -r.mean_abs_delta, r.name))
    return rows


def counts_from_results(modified_sets: Sequence[Sequence[int]], width: int) -> np.ndarray:
    """Column-wise tally of per-row modified-feature index sets."""
    counts = np.zeros(width, dtype=np.int64)
    for idx in modified_sets:
        counts[list(idx)] += 1
    return counts


def affected_feature_report(table: Sequence[FeatureImportance], top_k: int, schema: FeatureSchema) -> dict:
    """Top-k features grouped by their raw-schema category.

    Only features with a nonzero count are listed.
    """
    if top_k > len(table):
        raise ValueError(f"top_k {top_k} exceeds table length {len(table)}")
    groups = {name: g for name, g in zip(schema.encoded_names(), schema.encoded_groups())}
    report: dict[str, list[dict]] = {}
    for row in table[:top_k]:
        if row.nonzero_delta_count == 0:
            continue
        report.setdefault(groups[row.name], []).append(
            {"name": row.name, "count": row.nonzero_delta_count, "mean_abs_delta": row.mean_abs_delta}
        )
    return report


def table_to_dicts(table: Sequence[FeatureImportance]) -> list[dict]:
    return [
        {"feature": r.feature, "name": r.name, "group": r.group,
         "count": r.nonzero_delta_count, "mean_abs_delta": r.mean_abs_delta}
        for r in table
    ]


def write_table_csv(table: Sequence[FeatureImportance], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "name", "count", "mean_abs_delta"])
        for r in table:
            w.writerow([r.feature, r.name, r.nonzero_delta_count, repr(r.mean_abs_delta)])
