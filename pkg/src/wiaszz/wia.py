"""Work-item aware BIC prediction.

Each fix commit takes one of two routes: the work-item route picks the
newest work item before the issue report; otherwise the configured SZZ
baseline produces the candidates.
"""
from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

from .gitrepo import CommitMeta, Repository, open_repository
from .methods import ChangeSetCache, Diagnostics, MethodChangeSet, MethodRef, TestPathPolicy, modified_methods
from .szz import FALLBACKS, CandidateSet, FilterConfig, bszz_candidates, run_fallback
from .workitems import (
    SECONDS_PER_DAY,
    Factor,
    TrackingMatrix,
    build_tracking_matrix,
    detect_work_items,
    eligible_items,
    select_bic_candidate,
    select_first_prior_item,
)

logger = logging.getLogger(__name__)

WORK_ITEM = "work_item"
FALLBACK = "fallback"


@dataclass(frozen=True)
class WiaConfig:
    factor: Factor = Factor(0.7)
    lookback_days: int = 30
    fallback: str = "b"
    issue_filter: bool = True
    one_commit_filter: bool = False
    max_commits: int = 10000
    test_policy: TestPathPolicy = TestPathPolicy()

    def __post_init__(self):
        object.__setattr__(self, "factor", Factor(self.factor))
        if self.lookback_days < 1:
            raise ValueError("lookback_days must be positive")
        if self.max_commits < 1:
            raise ValueError("max_commits must be positive")
        if self.fallback not in FALLBACKS:
            raise ValueError(f"fallback must be one of {FALLBACKS}")

    def filters(self, issue_date: int | None) -> FilterConfig:
        return FilterConfig(self.issue_filter, self.one_commit_filter, issue_date)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["factor"] = float(self.factor)
        d["test_policy"] = {k: list(v) for k, v in asdict(self.test_policy).items()}
        return d


@dataclass(frozen=True)
class BicPrediction:
    fc: str
    path: str
    candidates: tuple[str, ...]
    work_item_count: int = 0
    detected_work_items: int = 0
    diagnostics: tuple[str, ...] = ()
    record_id: str = ""

    def __post_init__(self):
        if self.path not in (WORK_ITEM, FALLBACK):
            raise ValueError(f"unknown path {self.path!r}")
        if self.path == WORK_ITEM and len(self.candidates) != 1:
            raise ValueError("work-item predictions carry exactly one candidate")


@dataclass
class FixAnalysis:
    """Factor-independent facts about one fix commit.

    The matrix and the baseline candidates do not depend on the factor, so
    a sweep can decide many factors from one analysis.
    """

    repo: Repository
    fc: CommitMeta
    issue_date: int | None
    fc_changes: MethodChangeSet
    matrix: TrackingMatrix | None
    notes: list[str] = field(default_factory=list)
    external_candidates: CandidateSet | None = None
    _baseline: CandidateSet | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def anomalous_issue_date(self) -> bool:
        return self.issue_date is not None and self.issue_date > self.fc.commit_time

    def baseline(self) -> CandidateSet:
        if self.external_candidates is not None:
            return self.external_candidates
        with self._lock:
            if self._baseline is None:
                self._baseline = bszz_candidates(self.repo, self.fc.id)
            return self._baseline


def mining_window_start(fc_time: int, issue_date: int | None, lookback_days: int) -> int:
    anchor = fc_time if issue_date is None else min(issue_date, fc_time)
    return anchor - lookback_days * SECONDS_PER_DAY


def history_change_sets(
    repo: Repository,
    walk: Sequence[CommitMeta],
    fc_changes: MethodChangeSet,
    policy: TestPathPolicy,
    *,
    cache: ChangeSetCache | None = None,
    diagnostics: Diagnostics | None = None,
) -> list[MethodChangeSet]:
    """Change sets of ``walk`` (newest first) with file paths mapped to the fix's names.

    Only files the fix touched are parsed.  Renames reported by git while
    walking backwards are followed so older paths map onto the fix's path.
    """
    alias = {m.file: m.file for m in fc_changes.methods}
    for old, new in fc_changes.renames:
        if new in alias:
            alias[old] = alias[new]
    out = []
    for meta in walk:
        if meta.id == fc_changes.commit:
            out.append(fc_changes)
            continue
        cs = modified_methods(
            repo, meta.id, policy, paths=alias.keys(), diagnostics=diagnostics, cache=cache
        )
        methods = frozenset(
            MethodRef(alias.get(m.file, m.file), m.qualified_name, m.arity) for m in cs.methods
        )
        out.append(MethodChangeSet(cs.commit, methods, cs.is_merge, cs.commit_time, cs.renames))
        for old, new in cs.renames:
            if new in alias:
                alias[old] = alias[new]
    return out


def analyze_fix(
    repo: Repository,
    fc: str,
    issue_date: int | None,
    config: WiaConfig,
    *,
    cache: ChangeSetCache | None = None,
    diagnostics: Diagnostics | None = None,
    fallback_candidates: CandidateSet | None = None,
) -> FixAnalysis:
    meta = repo.commit_meta(fc)
    fc_changes = modified_methods(repo, meta.id, config.test_policy, diagnostics=diagnostics, cache=cache)
    analysis = FixAnalysis(repo, meta, issue_date, fc_changes, None, external_candidates=fallback_candidates)
    if analysis.anomalous_issue_date:
        analysis.notes.append("issue date after fix commit")
        if diagnostics is not None:
            diagnostics.add(meta.id, "", "issue date after fix commit")
        return analysis
    if not fc_changes.methods:
        analysis.notes.append("no modified methods in fix commit")
        return analysis
    oldest = mining_window_start(meta.commit_time, issue_date, config.lookback_days)
    walk = repo.walk_history(meta.id, oldest, config.max_commits)
    history = history_change_sets(
        repo, walk, fc_changes, config.test_policy, cache=cache, diagnostics=diagnostics
    )
    analysis.matrix = build_tracking_matrix(fc_changes, history)
    return analysis


def _fallback_prediction(analysis: FixAnalysis, config: WiaConfig, detected: int, notes) -> BicPrediction:
    filters = config.filters(analysis.issue_date)
    candidates = run_fallback(analysis.baseline(), config.fallback, filters)
    return BicPrediction(
        analysis.fc.id, FALLBACK, tuple(candidates), 0, detected, tuple(notes)
    )


def decide(analysis: FixAnalysis, config: WiaConfig, factor: Factor | float | None = None) -> BicPrediction:
    """Route an analysed fix commit at ``factor`` (default: the configured one)."""
    factor = Factor(config.factor if factor is None else factor)
    notes = list(analysis.notes)
    if config.issue_filter and analysis.issue_date is None:
        raise ValueError("an issue date is required while the issue filter is enabled")
    if analysis.matrix is None:
        return _fallback_prediction(analysis, config, 0, notes)
    items = detect_work_items(analysis.matrix, factor)
    detected = sum(1 for c in items.commits() if c != analysis.fc.id)
    if config.issue_filter:
        eligible = eligible_items(items, analysis.issue_date, config.lookback_days)
        choice = select_bic_candidate(items, analysis.issue_date, config.lookback_days)
    else:
        eligible = [(c, t) for c, t in items.items if c != items.fc and t <= analysis.fc.commit_time]
        choice = select_first_prior_item(items, analysis.fc.commit_time)
    if choice is None:
        if detected:
            notes.append("work items found but none before the issue date")
        else:
            notes.append("no work items")
        return _fallback_prediction(analysis, config, detected, notes)
    return BicPrediction(analysis.fc.id, WORK_ITEM, (choice,), len(eligible), detected, tuple(notes))


def predict_bic(
    repo: Repository,
    fc: str,
    issue_date: int | None,
    config: WiaConfig | None = None,
    *,
    cache: ChangeSetCache | None = None,
    diagnostics: Diagnostics | None = None,
    fallback_candidates: CandidateSet | None = None,
) -> BicPrediction:
    config = config or WiaConfig()
    analysis = analyze_fix(
        repo, fc, issue_date, config, cache=cache, diagnostics=diagnostics,
        fallback_candidates=fallback_candidates,
    )
    return decide(analysis, config)


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class RecordResult:
    record_id: str
    prediction: BicPrediction | None = None
    error: str | None = None


@dataclass(frozen=True)
class RunSummary:
    n: int
    part_a: int
    part_b: int
    errors: int
    # records with work items, none of them before the issue date
    late_work_items: int
    anomalous_issue_dates: int

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(results: Sequence[RecordResult]) -> RunSummary:
    preds = [r.prediction for r in results if r.prediction is not None]
    return RunSummary(
        n=len(results),
        part_a=sum(p.path == WORK_ITEM for p in preds),
        part_b=sum(p.path == FALLBACK for p in preds),
        errors=sum(r.error is not None for r in results),
        late_work_items=sum(p.path == FALLBACK and p.detected_work_items > 0 for p in preds),
        anomalous_issue_dates=sum("issue date after fix commit" in p.diagnostics for p in preds),
    )


def analyze_dataset(
    records: Sequence,
    config: WiaConfig,
    parallelism: int = 1,
    *,
    cache_dir=None,
    cache: ChangeSetCache | None = None,
    diagnostics: Diagnostics | None = None,
    external_candidates: dict[str, CandidateSet] | None = None,
    opener: Callable[..., Repository] = open_repository,
) -> list[FixAnalysis | Exception]:
    """Analyse every record; failures come back as exception objects in place."""
    if parallelism < 1:
        raise ValueError("parallelism must be positive")
    cache = cache if cache is not None else ChangeSetCache()

    def work(record):
        try:
            repo = opener(record.repo, cache_dir)
            ext = None
            if external_candidates is not None:
                ext = external_candidates.get(record.fc, CandidateSet(record.fc))
            return analyze_fix(
                repo, record.fc, record.issue_date, config, cache=cache,
                diagnostics=diagnostics, fallback_candidates=ext,
            )
        except Exception as exc:
            logger.warning("record %s failed: %s", record.id, exc)
            return exc

    if parallelism == 1:
        return [work(r) for r in records]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(work, records))


def decide_dataset(records: Sequence, analyses: Sequence, config: WiaConfig,
                   factor: Factor | float | None = None) -> list[RecordResult]:
    results = []
    for record, analysis in zip(records, analyses):
        if isinstance(analysis, Exception):
            results.append(RecordResult(record.id, error=f"{type(analysis).__name__}: {analysis}"))
            continue
        try:
            pred = decide(analysis, config, factor)
        except Exception as exc:
            results.append(RecordResult(record.id, error=f"{type(exc).__name__}: {exc}"))
            continue
        results.append(RecordResult(record.id, replace(pred, record_id=record.id)))
    return results


def run_dataset(records: Sequence, config: WiaConfig, parallelism: int = 1, **kwargs) -> list[RecordResult]:
    """One result per record, in input order; failing records become error entries."""
    analyses = analyze_dataset(records, config, parallelism, **kwargs)
    return decide_dataset(records, analyses, config)
