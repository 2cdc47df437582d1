"""Validated tabular access to the tuning harness's CSV outputs.

The renderers are pure readers: they never modify the input files and fail
fast, naming the offending column, when a CSV does not match the documented
schema or carries NaN in a key metric.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

SUMMARY_REQUIRED = (
    "variant",
    "dimension",
    "replicate",
    "best_objective",
    "initial_objective",
    "total_violations",
)
SUMMARY_KEY_METRICS = ("best_objective", "initial_objective")

RUNS_REQUIRED = (
    "variant",
    "dimension",
    "replicate",
    "iteration",
    "theta_0",
    "y_objective",
    "safe_min_0",
    "safe_max_0",
)
RUNS_KEY_METRICS = ("y_objective",)


class SchemaError(ValueError):
    """The CSV is missing a required column or carries NaN in a key metric."""


@dataclass
class StudyFrame:
    """Column-oriented view of one harness CSV."""

    columns: dict[str, list[str]]
    path: str

    def __len__(self) -> int:
        first = next(iter(self.columns.values()), [])
        return len(first)

    def strings(self, name: str) -> list[str]:
        return self.columns[name]

    def floats(self, name: str) -> np.ndarray:
        return np.array([float(v) for v in self.columns[name]])

    def ints(self, name: str) -> np.ndarray:
        return np.array([int(v) for v in self.columns[name]])

    def mask(self, **conditions) -> np.ndarray:
        out = np.ones(len(self), dtype=bool)
        for name, value in conditions.items():
            out &= np.array([v == str(value) for v in self.columns[name]])
        return out


def _load(path, required, key_metrics) -> StudyFrame:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    for name in required:
        if name not in header:
            raise SchemaError(f"{path}: missing required column {name!r}")
    columns = {name: [row[i] for row in rows] for i, name in enumerate(header)}
    frame = StudyFrame(columns=columns, path=str(path))
    for name in key_metrics:
        for value in columns[name]:
            if value == "" or math.isnan(float(value)):
                raise SchemaError(f"{path}: NaN in key metric column {name!r}")
    return frame


def load_summary(path) -> StudyFrame:
    """summary.csv: one row per (variant, dimension, replicate)."""
    return _load(path, SUMMARY_REQUIRED, SUMMARY_KEY_METRICS)


def load_runs(path) -> StudyFrame:
    """runs.csv: one row per iteration of every run."""
    return _load(path, RUNS_REQUIRED, RUNS_KEY_METRICS)
