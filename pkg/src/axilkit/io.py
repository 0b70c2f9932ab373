"""Dataset ingestion and explanation tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .axil import AxilMatrix
from .trainer import Dataset


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def load_csv(path: Union[str, Path], target_column: Optional[str],
             label_column: Optional[str] = None,
             feature_columns: Optional[Sequence[str]] = None) -> Dataset:
    """Read a header-first CSV into a :class:`Dataset`.

    Every column other than the target and label columns is a feature
    unless ``feature_columns`` names them explicitly. ``target_column=None``
    reads unlabelled scoring data; the target is then all zeros
    and must not be used.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    for name in (target_column, label_column):
        if name is not None and name not in header:
            raise DataError(f"{path}: column {name!r} not found")
    if feature_columns is None:
        feature_columns = [h for h in header if h not in (target_column, label_column)]
    else:
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise DataError(f"{path}: column {missing[0]!r} not found")
    if not feature_columns:
        raise DataError(f"{path}: no feature columns")
    index = {h: k for k, h in enumerate(header)}

    def numeric(row_no, row, col):
        cell = row[index[col]].strip()
        try:
            value = float(cell)
        except ValueError:
            raise DataError(
                f"{path}: row {row_no}, column {col!r}: non-numeric value {cell!r}"
            ) from None
        if not np.isfinite(value):
            raise DataError(f"{path}: row {row_no}, column {col!r}: non-finite value")
        return value

    X, y, labels = [], [], []
    for row_no, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}"
            )
        X.append([numeric(row_no, row, c) for c in feature_columns])
        if target_column is not None:
            y.append(numeric(row_no, row, target_column))
        if label_column is not None:
            labels.append(row[index[label_column]])
    target = y if target_column is not None else np.zeros(len(X))
    return Dataset(np.array(X), np.array(target, dtype=np.float64),
                   labels=labels if label_column is not None else None,
                   feature_names=list(feature_columns))


@dataclass
class ExplainRow:
    label: str
    weight: float
    target: float
    product: float


@dataclass
class ExplainTable:
    instance: str
    rows: list
    weight_sum: float
    prediction: float

    @classmethod
    def build(cls, K: AxilMatrix, y_train, column: int,
              train_labels: Optional[Sequence[str]] = None,
              instance_label: Optional[str] = None) -> "ExplainTable":
        """Table for scored instance ``column``, sorted by descending weight.

        Ties keep training order.
        """
        k = K.weights[:, column]
        y = np.asarray(y_train, dtype=np.float64)
        labels = train_labels or K.train_labels or [str(i) for i in range(len(y))]
        if instance_label is None:
            instance_label = (K.new_labels[column] if K.new_labels
                              else str(column))
        order = np.argsort(-k, kind="stable")
        rows = [ExplainRow(labels[j], float(k[j]), float(y[j]), float(k[j] * y[j]))
                for j in order]
        return cls(instance=instance_label, rows=rows,
                   weight_sum=float(k.sum()), prediction=float(k @ y))

    def render(self) -> str:
        """Plain-text layout: 4-decimal weights, 2-decimal targets/products."""
        width = max([len("Sum"), len("Instance")] + [len(r.label) for r in self.rows])
        head = f"{'Instance':<{width}}  {'k_j':>8}  {'y_j':>10}  {'k_j*y_j':>10}"
        rule = "-" * len(head)
        out = [f"AXIL weights for {self.instance}", head, rule]
        for r in self.rows:
            out.append(f"{r.label:<{width}}  {r.weight:>8.4f}  {r.target:>10.2f}"
                       f"  {r.product:>10.2f}")
        out.append(rule)
        out.append(f"{'Sum':<{width}}  {self.weight_sum:>8.2f}  {'ŷ →':>10}"
                   f"  {self.prediction:>10.2f}")
        out.append(rule)
        return "\n".join(out) + "\n"

    def to_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "weight", "target", "product"])
        for r in self.rows:
            writer.writerow([r.label, repr(r.weight), repr(r.target), repr(r.product)])
        writer.writerow(["Sum", repr(self.weight_sum), "", repr(self.prediction)])


__all__ = ["DataError", "load_csv", "ExplainRow", "ExplainTable"]
