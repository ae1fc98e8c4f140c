"""Tracking matrices and work-item detection.

A tracking matrix has one column per method the fix commit modified and one
row per historical commit, set to 1 where that commit modified the method.  A
row is a work item when its bit count reaches ``factor * N``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .methods import MethodChangeSet, MethodRef

SECONDS_PER_DAY = 86400


class EmptyFixChangeSet(ValueError):
    """The fix commit touched no (non-test) methods; use the fallback path."""


@dataclass(frozen=True)
class Factor:
    """Work-item threshold in (0, 1], held as an exact fraction.

    Floats are converted through their shortest decimal repr, so ``0.7``
    is exactly 7/10.
    """

    value: Fraction

    def __init__(self, value):
        if isinstance(value, Factor):
            frac = value.value
        elif isinstance(value, float):
            frac = Fraction(repr(value))
        else:
            frac = Fraction(str(value)) if isinstance(value, str) else Fraction(value)
        if not (0 < frac <= 1):
            raise ValueError(f"factor must be in (0, 1], got {value}")
        object.__setattr__(self, "value", frac)

    def __float__(self):
        return float(self.value)

    def __str__(self):
        return format(float(self.value), "g")


@dataclass(frozen=True)
class MatrixRow:
    commit: str
    commit_time: int
    bits: tuple[int, ...]

    @property
    def count(self) -> int:
        return sum(self.bits)


@dataclass(frozen=True)
class TrackingMatrix:
    fc: str
    columns: tuple[MethodRef, ...]
    rows: tuple[MatrixRow, ...]

    def __post_init__(self):
        n = len(self.columns)
        if n < 1:
            raise ValueError("a tracking matrix needs at least one column")
        for row in self.rows:
            if len(row.bits) != n:
                raise ValueError(f"row {row.commit[:12]} has {len(row.bits)} bits, expected {n}")
        keys = [(r.commit_time, r.commit) for r in self.rows]
        if any(a <= b for a, b in zip(keys, keys[1:])):
            raise ValueError("rows must be strictly newest first")

    @property
    def n(self) -> int:
        return len(self.columns)

    def row_for(self, commit: str) -> MatrixRow | None:
        return next((r for r in self.rows if r.commit == commit), None)


@dataclass(frozen=True)
class WorkItemSet:
    fc: str
    factor: Factor
    items: tuple[tuple[str, int], ...]  # (commit, commit_time), newest first

    def __len__(self):
        return len(self.items)

    def commits(self) -> list[str]:
        return [c for c, _ in self.items]


def build_tracking_matrix(fc_changes: MethodChangeSet, history: Sequence[MethodChangeSet]) -> TrackingMatrix:
    """Rows for every non-merge entry of ``history``; methods the fix did not touch are ignored."""
    if not fc_changes.methods:
        raise EmptyFixChangeSet(f"fix commit {fc_changes.commit[:12]} modified no methods")
    columns = tuple(sorted(fc_changes.methods))
    rows = [
        MatrixRow(cs.commit, cs.commit_time, tuple(int(m in cs.methods) for m in columns))
        for cs in history
        if not cs.is_merge
    ]
    rows.sort(key=lambda r: (r.commit_time, r.commit), reverse=True)
    return TrackingMatrix(fc_changes.commit, columns, tuple(rows))


def is_work_item(matrix: TrackingMatrix, row_index: int, factor: Factor | float) -> bool:
    if not 0 <= row_index < len(matrix.rows):
        raise IndexError(f"row {row_index} out of range ({len(matrix.rows)} rows)")
    factor = Factor(factor)
    return matrix.rows[row_index].count >= factor.value * matrix.n


def detect_work_items(matrix: TrackingMatrix, factor: Factor | float) -> WorkItemSet:
    factor = Factor(factor)
    threshold = factor.value * matrix.n
    items = tuple((r.commit, r.commit_time) for r in matrix.rows if r.count >= threshold)
    return WorkItemSet(matrix.fc, factor, items)


def _newest(items):
    # newest time wins; among equal times the smallest id
    best = None
    for commit, t in items:
        if best is None or t > best[1] or (t == best[1] and commit < best[0]):
            best = (commit, t)
    return best[0] if best else None


def eligible_items(items: WorkItemSet, issue_date: int, lookback_days: int) -> list[tuple[str, int]]:
    """Work items inside ``[issue_date - lookback, issue_date)``."""
    if lookback_days < 1:
        raise ValueError("lookback_days must be positive")
    oldest = issue_date - lookback_days * SECONDS_PER_DAY
    return [(c, t) for c, t in items.items if oldest <= t < issue_date]


def select_bic_candidate(items: WorkItemSet, issue_date: int, lookback_days: int = 30) -> str | None:
    """Newest work item before the issue report, within the lookback window."""
    choice = _newest(eligible_items(items, issue_date, lookback_days))
    if choice is not None:
        t = dict(items.items)[choice]
        assert t < issue_date, "selected work item does not predate the issue report"
    return choice


def select_first_prior_item(items: WorkItemSet, fc_time: int) -> str | None:
    """Issue-date-free selection: the first work item older than the fix itself."""
    return _newest((c, t) for c, t in items.items if c != items.fc and t <= fc_time)


# --------------------------------------------------------------------------
# CSV dump


def matrix_to_csv(matrix: TrackingMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["commit", "commit_time", *(m.label() for m in matrix.columns)])
    for row in matrix.rows:
        writer.writerow([row.commit, row.commit_time, *row.bits])
    return buf.getvalue()


def matrix_from_csv(text: str, fc: str | None = None) -> TrackingMatrix:
    """Inverse of :func:`matrix_to_csv`; ``fc`` defaults to the newest row."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header[:2] != ["commit", "commit_time"]:
        raise ValueError("not a tracking matrix dump")
    columns = tuple(MethodRef.from_label(label) for label in header[2:])
    rows = tuple(
        MatrixRow(rec[0], int(rec[1]), tuple(int(b) for b in rec[2:])) for rec in reader if rec
    )
    if fc is None:
        if not rows:
            raise ValueError("fix commit id required for a matrix without rows")
        fc = rows[0].commit
    return TrackingMatrix(fc, columns, rows)
