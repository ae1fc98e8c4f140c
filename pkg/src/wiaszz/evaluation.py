"""Dataset loading, issue-date simulation, scoring and factor sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .gitrepo import Repository, is_commit_id, open_repository
from .wia import (
    WORK_ITEM,
    RecordResult,
    WiaConfig,
    analyze_dataset,
    decide_dataset,
    summarize,
)
from .workitems import Factor

Q2_OFFSET = 0.93
LEGACY_DELAY = 60


@dataclass(frozen=True)
class FixRecord:
    id: str
    repo: str
    fc: str
    oracle_bics: frozenset[str]
    issue_date: int | None = None
    issue_date_kind: str = "real"
    language: str | None = None

    def __post_init__(self):
        if not self.oracle_bics:
            raise ValueError(f"record {self.id}: oracle BIC set is empty")
        if self.issue_date_kind not in ("real", "simulated"):
            raise ValueError(f"record {self.id}: bad issue_date_kind {self.issue_date_kind!r}")

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "repo": self.repo,
            "fix_commit_hash": self.fc,
            "bug_commit_hashes": sorted(self.oracle_bics),
        }
        if self.issue_date is not None:
            out["issue_date"] = self.issue_date
            out["issue_date_kind"] = self.issue_date_kind
        if self.language is not None:
            out["language"] = self.language
        return out


@dataclass(frozen=True)
class ValidationError:
    record_id: str
    index: int
    message: str


@dataclass
class LoadedDataset:
    records: list[FixRecord]
    errors: list[ValidationError] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)


def parse_timestamp(value) -> int:
    """Epoch seconds from an int/float or an ISO-8601 string (naive = UTC)."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a timestamp")
    if isinstance(value, (int, float)):
        return int(value)
    text = str(value).strip()
    if text.lstrip("-").isdigit():
        return int(text)
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _hash(value, what: str) -> str:
    if not isinstance(value, str) or not is_commit_id(value.strip().lower()):
        raise ValueError(f"{what} is not a 40-character commit hash: {value!r}")
    return value.strip().lower()


def record_from_json(obj: dict, base_dir: Path | None = None) -> FixRecord:
    for key in ("id", "repo", "fix_commit_hash", "bug_commit_hashes"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    bics = obj["bug_commit_hashes"]
    if isinstance(bics, str):
        bics = [bics]
    if not bics:
        raise ValueError("bug_commit_hashes is empty")
    repo = str(obj["repo"])
    if base_dir is not None and "://" not in repo and not Path(repo).is_absolute():
        candidate = base_dir / repo
        if candidate.exists():
            repo = str(candidate)
    issue = obj.get("issue_date")
    return FixRecord(
        id=str(obj["id"]),
        repo=repo,
        fc=_hash(obj["fix_commit_hash"], "fix_commit_hash"),
        oracle_bics=frozenset(_hash(b, "bug commit hash") for b in bics),
        issue_date=parse_timestamp(issue) if issue not in (None, "") else None,
        issue_date_kind=obj.get("issue_date_kind", "real"),
        language=obj.get("language"),
    )


def load_dataset(path: str | Path, exclusions: str | Path | None = None) -> LoadedDataset:
    """Read a JSON array of records, dropping excluded ids.

    Invalid records are reported in ``errors`` instead of raising.
    """
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError(f"{path}: expected a JSON array of records")
    excluded_ids: set[str] = set()
    if exclusions is not None:
        excluded_ids = {
            line.strip() for line in Path(exclusions).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        }
    out = LoadedDataset([])
    for i, obj in enumerate(data):
        rid = str(obj.get("id", f"#{i}")) if isinstance(obj, dict) else f"#{i}"
        if rid in excluded_ids:
            out.excluded.append(rid)
            continue
        try:
            if not isinstance(obj, dict):
                raise ValueError("record is not an object")
            out.records.append(record_from_json(obj, path.parent))
        except ValueError as exc:
            out.errors.append(ValidationError(rid, i, str(exc)))
    return out


def write_dataset(records: Iterable[FixRecord], path: str | Path):
    Path(path).write_text(
        json.dumps([r.to_json() for r in records], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


# --------------------------------------------------------------------------
# issue dates


def simulate_issue_date(bic_time: int, fc_time: int, offset: float = Q2_OFFSET, *, legacy: bool = False) -> int:
    """Issue date placed ``offset`` of the way from the BIC to the fix.

    ``legacy=True`` instead returns the BIC time plus one minute.
    """
    if bic_time > fc_time:
        raise ValueError("bug-inducing commit is newer than the fix commit")
    if legacy:
        return bic_time + LEGACY_DELAY
    frac = Fraction(repr(offset)) if isinstance(offset, float) else Fraction(offset)
    if not 0 <= frac <= 1:
        raise ValueError("offset must be within [0, 1]")
    exact = bic_time + frac * (fc_time - bic_time)
    value = math.floor(exact + Fraction(1, 2))
    return min(max(value, bic_time), fc_time)


def parse_offset(mode: str | float) -> tuple[float, bool]:
    """``"q2"`` / ``"legacy"`` / a number in [0, 1] -> ``(offset, legacy)``."""
    if isinstance(mode, str):
        key = mode.strip().lower()
        if key == "q2":
            return Q2_OFFSET, False
        if key == "legacy":
            return 0.0, True
        mode = float(key)
    if not 0 <= mode <= 1:
        raise ValueError("custom offset must be within [0, 1]")
    return float(mode), False


def assign_issue_dates(
    records: Sequence[FixRecord],
    offset_mode: str | float = "q2",
    *,
    cache_dir=None,
    opener: Callable[..., Repository] = open_repository,
) -> tuple[list[FixRecord], list[tuple[str, str]]]:
    """Fill missing issue dates by simulation.

    The newest oracle BIC anchors the interval so every oracle BIC predates the
    simulated report.  Returns the records and ``(record id, error)`` pairs for
    records whose commits could not be read; those keep no issue date.
    """
    offset, legacy = parse_offset(offset_mode)
    out, errors = [], []
    for rec in records:
        if rec.issue_date is not None:
            out.append(rec)
            continue
        try:
            repo = opener(rec.repo, cache_dir)
            fc_time = repo.commit_time(rec.fc)
            bic_time = max(repo.commit_time(b) for b in rec.oracle_bics)
            date = simulate_issue_date(bic_time, fc_time, offset, legacy=legacy)
            out.append(replace(rec, issue_date=date, issue_date_kind="simulated"))
        except Exception as exc:
            errors.append((rec.id, f"{type(exc).__name__}: {exc}"))
            out.append(rec)
    return out, errors


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsSummary:
    n: int
    tp: int
    fp: int
    oracle_bics: int
    recall: float
    precision: float
    f1: float
    precision_undefined: bool = False

    def to_dict(self) -> dict:
        return {
            "n": self.n, "tp": self.tp, "fp": self.fp, "oracle_bics": self.oracle_bics,
            "recall": self.recall, "precision": self.precision, "f1": self.f1,
            "precision_undefined": self.precision_undefined,
        }


def metrics(tp: int, fp: int, denominator: int, n: int = 0) -> MetricsSummary:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / denominator if denominator else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsSummary(n, tp, fp, denominator, recall, precision, f1, tp + fp == 0)


def score(results: Sequence[RecordResult], oracle: Sequence[FixRecord], recall_mode: str = "bics") -> MetricsSummary:
    """Count TP/FP over every predicted candidate.

    Recall divides by the number of oracle BICs (``recall_mode="bics"``) or
    by the number of records (``"records"``).  Records with errors or empty
    predictions still count in the denominator.
    """
    if recall_mode not in ("bics", "records"):
        raise ValueError("recall_mode must be 'bics' or 'records'")
    by_id = {r.id: r for r in oracle}
    if len(by_id) != len(oracle):
        raise ValueError("duplicate record ids in oracle")
    seen = set()
    tp = fp = 0
    for res in results:
        if res.record_id not in by_id:
            raise KeyError(f"prediction for unknown record {res.record_id!r}")
        seen.add(res.record_id)
        if res.prediction is None:
            continue
        truth = by_id[res.record_id].oracle_bics
        for cand in res.prediction.candidates:
            if cand in truth:
                tp += 1
            else:
                fp += 1
    if seen != set(by_id):
        missing = sorted(set(by_id) - seen)
        raise KeyError(f"no prediction for record(s): {', '.join(missing[:5])}")
    if recall_mode == "bics":
        denominator = sum(len(r.oracle_bics) for r in oracle)
    else:
        denominator = len(oracle)
    return metrics(tp, fp, denominator, len(oracle))


# --------------------------------------------------------------------------
# factor sweep

SWEEP_FIELDS = ["factor", "fcs_with_workitems", "total_workitems", "tp", "fp", "recall", "precision", "f1"]


@dataclass(frozen=True)
class SweepRow:
    factor: Factor
    fcs_with_workitems: int
    total_workitems: int
    metrics: MetricsSummary
    results: tuple[RecordResult, ...] = ()

    def as_list(self) -> list:
        m = self.metrics
        return [str(self.factor), self.fcs_with_workitems, self.total_workitems, m.tp, m.fp,
                f"{m.recall:.6f}", f"{m.precision:.6f}", f"{m.f1:.6f}"]


def factor_sweep(
    records: Sequence[FixRecord],
    factors: Sequence[Factor | float],
    config: WiaConfig,
    *,
    parallelism: int = 1,
    scope: str = "all",
    recall_mode: str = "bics",
    analyses: Sequence | None = None,
    **kwargs,
) -> list[SweepRow]:
    """Evaluate several factors from a single analysis pass.

    ``scope="work_item"`` scores only records routed to the work-item path
    (TP + FP then equals the FC count of the row).
    """
    if not factors:
        raise ValueError("at least one factor is required")
    if scope not in ("all", "work_item"):
        raise ValueError("scope must be 'all' or 'work_item'")
    if analyses is None:
        analyses = analyze_dataset(records, config, parallelism, **kwargs)
    rows = []
    for factor in factors:
        factor = Factor(factor)
        results = decide_dataset(records, analyses, config, factor)
        wi = [r for r in results if r.prediction is not None and r.prediction.path == WORK_ITEM]
        if scope == "all":
            m = score(results, records, recall_mode)
        else:
            ids = {r.record_id for r in wi}
            m = score(wi, [rec for rec in records if rec.id in ids], recall_mode)
        rows.append(SweepRow(
            factor,
            len(wi),
            sum(r.prediction.work_item_count for r in wi),
            m,
            tuple(results),
        ))
    return rows


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_FIELDS)
    for row in rows:
        writer.writerow(row.as_list())
    return buf.getvalue()


# --------------------------------------------------------------------------
# prediction output

PREDICTION_FIELDS = ["record_id", "fc", "path", "candidates", "work_item_count", "diagnostics"]


def predictions_to_csv(results: Sequence[RecordResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTION_FIELDS)
    for res in results:
        p = res.prediction
        if p is None:
            writer.writerow([res.record_id, "", "error", "", 0, res.error])
        else:
            writer.writerow([res.record_id, p.fc, p.path, " ".join(p.candidates),
                             p.work_item_count, "; ".join(p.diagnostics)])
    return buf.getvalue()


def predictions_to_jsonl(results: Sequence[RecordResult]) -> str:
    lines = []
    for res in results:
        p = res.prediction
        if p is None:
            rec = {"record_id": res.record_id, "error": res.error}
        else:
            rec = {
                "record_id": res.record_id, "fc": p.fc, "path": p.path,
                "candidates": list(p.candidates), "work_item_count": p.work_item_count,
                "detected_work_items": p.detected_work_items, "diagnostics": list(p.diagnostics),
            }
        lines.append(json.dumps(rec, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def metrics_report(results: Sequence[RecordResult], records: Sequence[FixRecord], config: dict,
                   recall_mode: str = "bics") -> dict:
    m = score(results, records, recall_mode)
    return {
        "config": config,
        "metrics": m.to_dict(),
        "summary": summarize(results).to_dict(),
        "errors": [{"record_id": r.record_id, "error": r.error} for r in results if r.error],
    }

